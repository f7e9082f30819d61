//! Adam / AdamW and global-norm gradient clipping.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::DenseArray;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerMode {
    /// Weight decay folded into the gradient as an L2 term.
    Adam,
    /// Decoupled weight decay.
    AdamW,
}

impl FromStr for OptimizerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerMode::Adam),
            "adamw" => Ok(OptimizerMode::AdamW),
            _ => Err(Error::InvalidConfig(format!("unknown optimizer `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub mode: OptimizerMode,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            mode: OptimizerMode::AdamW,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<DenseArray>,
    pub v: Vec<DenseArray>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, params: &[&DenseArray]) -> Self {
        let zeros: Vec<DenseArray> = params.iter().map(|p| DenseArray::zeros(p.shape())).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }
}

/// One Adam or AdamW update of every parameter in place.
pub fn adamw_step(
    params: &mut [&mut DenseArray],
    grads: &[DenseArray],
    state: &mut OptimizerState,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape("optimizer parameter count mismatch".into()));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Shape(format!(
                "optimizer shapes {:?} / {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    let c = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let decay = 1.0 - c.lr * c.weight_decay;
    for (k, p) in params.iter_mut().enumerate() {
        let (m, v) = (state.m[k].data_mut(), state.v[k].data_mut());
        for (i, theta) in p.data_mut().iter_mut().enumerate() {
            let mut g = grads[k].data()[i];
            match c.mode {
                OptimizerMode::Adam => g += c.weight_decay * *theta,
                OptimizerMode::AdamW => *theta *= decay,
            }
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *theta -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
        }
    }
    Ok(())
}

pub fn global_norm(grads: &[DenseArray]) -> f64 {
    grads.iter().map(DenseArray::sum_sq).sum::<f64>().sqrt()
}

/// Rescales all gradients by `max_norm / norm` when the global L2 norm
/// exceeds `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [DenseArray], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale(s);
        }
    }
    norm
}
