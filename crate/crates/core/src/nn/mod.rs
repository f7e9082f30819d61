//! Self-contained numeric core for the classifier head and its training.

mod array;
mod augment;
mod checkpoint;
mod ema;
mod head;
mod loss;
mod optim;
mod scheduler;

pub use array::{global_avg_pool, DenseArray};
pub use augment::{
    grid_shape, mix_augment, random_erasing, AugOp, ErasingParams, MixParams, SIMPLIFIED_MIX_OPS,
};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader};
pub use ema::{ema_update, EmaState};
pub use head::{ClassifierHead, Linear};
pub use loss::{sigmoid, smooth_labels, weighted_bce, LossOutput, LossWeights, SmoothingConfig};
pub use optim::{
    adamw_step, clip_grad_norm, global_norm, AdamConfig, OptimizerMode, OptimizerState,
};
pub use scheduler::{plateau_step, PlateauEvent, SchedulerState};
