use serde::{Deserialize, Serialize};

/// Reduce-on-plateau learning rate schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub current_lr: f64,
    pub best_metric: Option<f64>,
    pub epochs_since_improvement: usize,
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlateauEvent {
    Improved,
    Waiting,
    Reduced,
    /// A reduction was due but the rate is already at `min_lr`.
    Exhausted,
}

impl SchedulerState {
    pub fn new(lr: f64, patience: usize, factor: f64, min_lr: f64) -> Self {
        Self {
            current_lr: lr,
            best_metric: None,
            epochs_since_improvement: 0,
            patience,
            factor,
            min_lr,
        }
    }

    /// Patience 4, factor 0.1.
    pub fn with_defaults(lr: f64) -> Self {
        Self::new(lr, 4, 0.1, 1e-7)
    }

    /// Records one validation result. A metric improves only when it is
    /// strictly better than the best so far; after `patience + 1` consecutive
    /// non-improving results the rate is multiplied by `factor` (floored at
    /// `min_lr`) and the counter restarts.
    pub fn step(&mut self, val_metric: f64, higher_is_better: bool) -> PlateauEvent {
        let improved = match self.best_metric {
            None => true,
            Some(best) if higher_is_better => val_metric > best,
            Some(best) => val_metric < best,
        };
        if improved {
            self.best_metric = Some(val_metric);
            self.epochs_since_improvement = 0;
            return PlateauEvent::Improved;
        }
        self.epochs_since_improvement += 1;
        if self.epochs_since_improvement <= self.patience {
            return PlateauEvent::Waiting;
        }
        self.epochs_since_improvement = 0;
        if self.current_lr <= self.min_lr {
            return PlateauEvent::Exhausted;
        }
        self.current_lr = (self.current_lr * self.factor).max(self.min_lr);
        PlateauEvent::Reduced
    }
}

pub fn plateau_step(state: &mut SchedulerState, val_metric: f64, higher_is_better: bool) -> PlateauEvent {
    state.step(val_metric, higher_is_better)
}
