//! Array-level augmentations: random erasing and a simplified AugMix-style
//! mixing over generic array operations.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::DenseArray;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErasingParams {
    pub probability: f64,
    /// Erased fraction of the H×W area, `[low, high]`.
    pub area: (f64, f64),
    /// Height/width ratio range.
    pub aspect: (f64, f64),
    pub fill: f64,
}

impl Default for ErasingParams {
    fn default() -> Self {
        Self {
            probability: 0.5,
            area: (0.02, 0.4),
            aspect: (0.3, 1.0 / 0.3),
            fill: 0.0,
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

const ERASE_ATTEMPTS: usize = 100;

/// With probability `params.probability`, overwrites one axis-aligned
/// rectangle (all channels) with `params.fill`.
pub fn random_erasing<R: Rng + ?Sized>(
    image: &DenseArray,
    params: &ErasingParams,
    rng: &mut R,
) -> Result<DenseArray> {
    if image.ndim() != 3 || image.shape().contains(&0) {
        return Err(Error::Shape(format!(
            "random erasing needs a non-empty C×H×W array, got {:?}",
            image.shape()
        )));
    }
    let (a_lo, a_hi) = params.area;
    let (r_lo, r_hi) = params.aspect;
    if !(0.0..=1.0).contains(&params.probability)
        || !(a_lo > 0.0 && a_lo <= a_hi && a_hi <= 1.0)
        || !(r_lo > 0.0 && r_lo <= r_hi)
    {
        return Err(Error::InvalidConfig("random erasing ranges".into()));
    }
    let mut out = image.clone();
    if rng.random::<f64>() >= params.probability {
        return Ok(out);
    }
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    for _ in 0..ERASE_ATTEMPTS {
        let target = uniform(rng, params.area) * (h * w) as f64;
        let aspect = uniform(rng, params.aspect);
        let eh = (target * aspect).sqrt().round() as usize;
        let ew = (target / aspect).sqrt().round() as usize;
        if eh == 0 || ew == 0 || eh > h || ew > w {
            continue;
        }
        let top = rng.random_range(0..=h - eh);
        let left = rng.random_range(0..=w - ew);
        let data = out.data_mut();
        for ch in 0..c {
            for y in top..top + eh {
                let base = (ch * h + y) * w;
                data[base + left..base + left + ew].fill(params.fill);
            }
        }
        break;
    }
    Ok(out)
}

/// Elementary operations used by [`mix_augment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AugOp {
    Identity,
    /// Negates a random contiguous block of about a quarter of the values.
    SignFlipBlock,
    /// Adds uniform noise in `±scale`.
    Jitter(f64),
    /// Cyclic shift by a random offset.
    Roll,
}

impl AugOp {
    pub fn apply<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let n = x.len();
        match *self {
            AugOp::Identity => x.to_vec(),
            AugOp::SignFlipBlock => {
                let len = (n / 4).max(1).min(n);
                let start = rng.random_range(0..=n - len);
                let mut y = x.to_vec();
                for v in &mut y[start..start + len] {
                    *v = -*v;
                }
                y
            }
            AugOp::Jitter(scale) => x
                .iter()
                .map(|v| v + scale * (2.0 * rng.random::<f64>() - 1.0))
                .collect(),
            AugOp::Roll => {
                let shift = if n > 1 { rng.random_range(1..n) } else { 0 };
                let mut y = x.to_vec();
                y.rotate_right(shift);
                y
            }
        }
    }
}

pub const SIMPLIFIED_MIX_OPS: [AugOp; 4] = [
    AugOp::Identity,
    AugOp::SignFlipBlock,
    AugOp::Jitter(0.1),
    AugOp::Roll,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixParams {
    pub chains: usize,
    /// Ops per chain; 0 draws a depth in 1..=3 per chain.
    pub depth: usize,
    pub dirichlet_alpha: f64,
    pub beta_alpha: f64,
}

impl Default for MixParams {
    fn default() -> Self {
        Self {
            chains: 3,
            depth: 0,
            dirichlet_alpha: 1.0,
            beta_alpha: 1.0,
        }
    }
}

/// Simplified AugMix: `chains` random op chains mixed with Dirichlet weights,
/// then blended with the original by a Beta-distributed coefficient.
pub fn mix_augment<R: Rng + ?Sized>(
    sample: &DenseArray,
    ops: &[AugOp],
    params: &MixParams,
    rng: &mut R,
) -> Result<DenseArray> {
    if ops.is_empty() || params.chains == 0 {
        return Err(Error::InvalidConfig("mixing needs ops and at least one chain".into()));
    }
    let gamma = Gamma::new(params.dirichlet_alpha, 1.0)
        .map_err(|e| Error::InvalidConfig(format!("dirichlet alpha: {e}")))?;
    let beta = Beta::new(params.beta_alpha, params.beta_alpha)
        .map_err(|e| Error::InvalidConfig(format!("beta alpha: {e}")))?;

    let mut weights: Vec<f64> = (0..params.chains).map(|_| gamma.sample(rng)).collect();
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    } else {
        weights.iter_mut().for_each(|w| *w = 1.0 / params.chains as f64);
    }
    let m = beta.sample(rng);

    let x = sample.data();
    let mut mixed = vec![0.0; x.len()];
    for &w in &weights {
        let depth = if params.depth == 0 {
            rng.random_range(1..=3)
        } else {
            params.depth
        };
        let mut y = x.to_vec();
        for _ in 0..depth {
            let op = ops[rng.random_range(0..ops.len())];
            y = op.apply(&y, rng);
        }
        for (acc, v) in mixed.iter_mut().zip(&y) {
            *acc += w * v;
        }
    }
    let out = x
        .iter()
        .zip(&mixed)
        .map(|(o, v)| (1.0 - m) * o + m * v)
        .collect();
    DenseArray::from_vec(sample.shape(), out)
}

/// Grid `(h, w)` with `h * w == n` and `h` the largest divisor of `n` not above √n.
pub fn grid_shape(n: usize) -> (usize, usize) {
    let mut h = (n as f64).sqrt() as usize;
    while h > 1 && n % h != 0 {
        h -= 1;
    }
    let h = h.max(1);
    (h, n / h)
}
