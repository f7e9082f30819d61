//! Label smoothing and the class-balanced binary cross-entropy.

use serde::{Deserialize, Serialize};

use crate::data::{AttributeMask, AttributeStats};
use crate::error::{Error, Result};

use super::DenseArray;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub alpha: f64,
}

impl SmoothingConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&alpha) {
            return Err(Error::InvalidConfig(format!(
                "smoothing alpha {alpha} outside [0, 0.5)"
            )));
        }
        Ok(Self { alpha })
    }
}

/// `(1 - alpha) * y + alpha * (1 - y)` per element.
pub fn smooth_labels(y: &[u8], cfg: SmoothingConfig) -> Vec<f64> {
    let a = cfg.alpha;
    y.iter()
        .map(|&v| {
            let y = v as f64;
            (1.0 - a) * y + a * (1.0 - y)
        })
        .collect()
}

/// Per-attribute weights for positive and negative labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

impl LossWeights {
    pub fn uniform(n_attributes: usize) -> Self {
        Self {
            positive: vec![1.0; n_attributes],
            negative: vec![1.0; n_attributes],
        }
    }

    /// `w+ = exp(1 - r)`, `w- = exp(r)` with `r` the training positive ratio.
    pub fn from_stats(stats: &AttributeStats) -> Self {
        Self::from_ratios(&stats.positive_ratio)
    }

    pub fn from_ratios(ratios: &[f64]) -> Self {
        Self {
            positive: ratios.iter().map(|r| (1.0 - r).exp()).collect(),
            negative: ratios.iter().map(|r| r.exp()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.positive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positive.is_empty()
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// Gradient w.r.t. the logits, same shape; zero on masked-out columns.
    pub grad: DenseArray,
}

/// Weighted binary cross-entropy averaged over `N * |mask|` elements.
///
/// `targets` may be smoothed; the weight of each element is chosen by its
/// hard label in `labels` (row-major, same shape).
pub fn weighted_bce(
    logits: &DenseArray,
    targets: &[f64],
    labels: &[u8],
    weights: &LossWeights,
    mask: &AttributeMask,
) -> Result<LossOutput> {
    if logits.ndim() != 2 {
        return Err(Error::Shape("logits must be 2-D".into()));
    }
    let (n, a) = (logits.rows(), logits.cols());
    if targets.len() != n * a || labels.len() != n * a || weights.len() != a || mask.len() != a {
        return Err(Error::Shape(format!(
            "loss inputs disagree with logits [{n}, {a}]"
        )));
    }
    if let Some(bad) = logits.data().iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("logit {bad}")));
    }
    let active = mask.count();
    if n == 0 || active == 0 {
        return Err(Error::Empty("loss over zero elements"));
    }
    let norm = 1.0 / (n * active) as f64;
    let mut grad = DenseArray::zeros(&[n, a]);
    let mut loss = 0.0;
    for i in 0..n {
        for j in 0..a {
            if !mask.is_active(j) {
                continue;
            }
            let k = i * a + j;
            let (x, t) = (logits.data()[k], targets[k]);
            let w = if labels[k] == 1 {
                weights.positive[j]
            } else {
                weights.negative[j]
            };
            // -[t ln s(x) + (1-t) ln(1-s(x))] = t softplus(-x) + (1-t) softplus(x)
            loss += w * (t * softplus(-x) + (1.0 - t) * softplus(x));
            grad.data_mut()[k] = w * (sigmoid(x) - t) * norm;
        }
    }
    Ok(LossOutput {
        loss: loss * norm,
        grad,
    })
}
