use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::DenseArray;

/// Shadow copy of the model parameters, updated after every optimizer step as
/// `shadow = decay * shadow + (1 - decay) * params`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaState {
    pub decay: f64,
    pub shadow: Vec<DenseArray>,
    pub updates: u64,
}

impl EmaState {
    /// Shadow starts as a copy of `params`.
    pub fn new(decay: f64, params: &[&DenseArray]) -> Result<Self> {
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::InvalidConfig(format!("EMA decay {decay} outside (0, 1)")));
        }
        Ok(Self {
            decay,
            shadow: params.iter().map(|p| (*p).clone()).collect(),
            updates: 0,
        })
    }

    pub fn update(&mut self, params: &[&DenseArray]) -> Result<()> {
        if params.len() != self.shadow.len()
            || params.iter().zip(&self.shadow).any(|(p, s)| p.shape() != s.shape())
        {
            return Err(Error::Shape("EMA shadow does not match parameters".into()));
        }
        let d = self.decay;
        for (s, p) in self.shadow.iter_mut().zip(params) {
            for (sv, pv) in s.data_mut().iter_mut().zip(p.data()) {
                *sv = d * *sv + (1.0 - d) * pv;
            }
        }
        self.updates += 1;
        Ok(())
    }
}

pub fn ema_update(ema: &mut EmaState, params: &[&DenseArray]) -> Result<()> {
    ema.update(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_params_keep_shadow() {
        let p = DenseArray::from_vec(&[2], vec![0.4, -1.0]).unwrap();
        let mut e = EmaState::new(0.9, &[&p]).unwrap();
        for _ in 0..50 {
            e.update(&[&p]).unwrap();
        }
        assert_eq!(e.shadow[0], p);
    }

    #[test]
    fn approaches_target_from_zero() {
        let zero = DenseArray::zeros(&[1]);
        let one = DenseArray::full(&[1], 1.0);
        let mut e = EmaState::new(0.999, &[&zero]).unwrap();
        for _ in 0..1000 {
            e.update(&[&one]).unwrap();
        }
        assert!((e.shadow[0].data()[0] - 0.6323).abs() < 1e-4);
        assert!((e.shadow[0].data()[0] - (1.0 - 0.999f64.powi(1000))).abs() < 1e-12);
    }

    #[test]
    fn invalid_decay_and_shapes() {
        let p = DenseArray::zeros(&[1]);
        assert!(EmaState::new(1.0, &[&p]).is_err());
        let mut e = EmaState::new(0.5, &[&p]).unwrap();
        assert!(e.update(&[&DenseArray::zeros(&[2])]).is_err());
    }
}
