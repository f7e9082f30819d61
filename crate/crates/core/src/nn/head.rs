//! Fully-connected classification head over pooled features.
//!
//! `hidden` ReLU layers (possibly none) followed by one affine layer with an
//! output per attribute. Dropout acts on the features entering the final
//! layer and uses inverted scaling, so inference needs no rescale.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::DenseArray;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// `[out, in]`
    pub weight: DenseArray,
    /// `[out]`
    pub bias: DenseArray,
}

impl Linear {
    /// Uniform init in ±1/√in for both weight and bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut sample = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let weight = DenseArray::from_vec(&[outputs, inputs], sample(outputs * inputs))
            .expect("shape matches");
        let bias = DenseArray::from_vec(&[outputs], sample(outputs)).expect("shape matches");
        Self { weight, bias }
    }

    fn inputs(&self) -> usize {
        self.weight.cols()
    }

    fn outputs(&self) -> usize {
        self.weight.rows()
    }

    /// `x W^T + b` for a batch `x` of shape `[n, in]`.
    fn apply(&self, x: &DenseArray) -> DenseArray {
        let (n, out) = (x.rows(), self.outputs());
        let mut y = DenseArray::zeros(&[n, out]);
        for i in 0..n {
            let xi = x.row(i);
            let yi = y.row_mut(i);
            for (o, yo) in yi.iter_mut().enumerate() {
                let w = self.weight.row(o);
                *yo = self.bias.data()[o] + xi.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ForwardRecord {
    /// Input of every layer; the last one is after dropout.
    inputs: Vec<DenseArray>,
    /// Pre-activations of the hidden layers.
    pre_activations: Vec<DenseArray>,
    dropout_mask: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    layers: Vec<Linear>,
    dropout_rate: f64,
    #[serde(skip)]
    record: Option<ForwardRecord>,
}

impl ClassifierHead {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        outputs: usize,
        dropout_rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || outputs == 0 || hidden.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(outputs);
        let layers = widths
            .windows(2)
            .map(|w| Linear::init(w[0], w[1], rng))
            .collect();
        Self::from_layers(layers, dropout_rate)
    }

    pub fn from_layers(layers: Vec<Linear>, dropout_rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate {dropout_rate} outside [0, 1)"
            )));
        }
        if layers.is_empty() {
            return Err(Error::InvalidConfig("head needs at least one layer".into()));
        }
        for l in &layers {
            if l.weight.ndim() != 2 || l.bias.shape() != [l.outputs()] {
                return Err(Error::Shape("inconsistent layer weight and bias".into()));
            }
        }
        for w in layers.windows(2) {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::Shape(format!(
                    "layer widths {} -> {} do not chain",
                    w[0].outputs(),
                    w[1].inputs()
                )));
            }
        }
        Ok(Self {
            layers,
            dropout_rate,
            record: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(Linear::outputs)
            .collect()
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    /// Parameters in declaration order: `w0, b0, w1, b1, ...`.
    pub fn parameters(&self) -> Vec<&DenseArray> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut DenseArray> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Overwrites every parameter with `values` (same order and shapes).
    pub fn load_parameters(&mut self, values: &[DenseArray]) -> Result<()> {
        let mut params = self.parameters_mut();
        if params.len() != values.len() {
            return Err(Error::Shape("parameter count mismatch".into()));
        }
        for (p, v) in params.iter_mut().zip(values) {
            if p.shape() != v.shape() {
                return Err(Error::Shape(format!(
                    "parameter shape {:?} vs {:?}",
                    p.shape(),
                    v.shape()
                )));
            }
            p.data_mut().copy_from_slice(v.data());
        }
        Ok(())
    }

    pub fn parameter_values(&self) -> Vec<DenseArray> {
        self.parameters().into_iter().cloned().collect()
    }

    fn check_batch(&self, batch: &DenseArray) -> Result<()> {
        if batch.ndim() != 2 || batch.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch {:?} does not match input width {}",
                batch.shape(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Training or evaluation forward pass. In training mode a fresh dropout
    /// mask is drawn from `rng`. The pass is recorded for [`Self::backward`].
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        batch: &DenseArray,
        train_mode: bool,
        rng: &mut R,
    ) -> Result<DenseArray> {
        self.check_batch(batch)?;
        let mask = if train_mode && self.dropout_rate > 0.0 {
            let width = self.layers.last().expect("non-empty").inputs();
            let keep = 1.0 - self.dropout_rate;
            let scale = 1.0 / keep;
            Some(
                (0..batch.rows() * width)
                    .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
                    .collect::<Vec<f64>>(),
            )
        } else {
            None
        };
        self.forward_with_mask(batch, mask)
    }

    /// Forward pass with an explicit dropout mask (per-element multipliers on
    /// the final layer's input, `None` for no dropout).
    pub fn forward_with_mask(
        &mut self,
        batch: &DenseArray,
        dropout_mask: Option<Vec<f64>>,
    ) -> Result<DenseArray> {
        self.check_batch(batch)?;
        let last = self.layers.len() - 1;
        if let Some(m) = &dropout_mask {
            if m.len() != batch.rows() * self.layers[last].inputs() {
                return Err(Error::Shape("dropout mask size".into()));
            }
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(last);
        let mut a = batch.clone();
        for layer in &self.layers[..last] {
            let z = layer.apply(&a);
            let mut next = z.clone();
            for v in next.data_mut() {
                *v = v.max(0.0);
            }
            inputs.push(a);
            pre_activations.push(z);
            a = next;
        }
        if let Some(m) = &dropout_mask {
            for (v, s) in a.data_mut().iter_mut().zip(m) {
                *v *= s;
            }
        }
        let logits = self.layers[last].apply(&a);
        inputs.push(a);
        self.record = Some(ForwardRecord {
            inputs,
            pre_activations,
            dropout_mask,
        });
        Ok(logits)
    }

    /// Evaluation-mode forward pass; does not touch the recorded pass.
    pub fn predict(&self, batch: &DenseArray) -> Result<DenseArray> {
        self.check_batch(batch)?;
        let last = self.layers.len() - 1;
        let mut a = batch.clone();
        for layer in &self.layers[..last] {
            a = layer.apply(&a);
            for v in a.data_mut() {
                *v = v.max(0.0);
            }
        }
        Ok(self.layers[last].apply(&a))
    }

    pub fn last_dropout_mask(&self) -> Option<&[f64]> {
        self.record.as_ref()?.dropout_mask.as_deref()
    }

    /// Gradients of the loss w.r.t. every parameter (declaration order),
    /// given the gradient w.r.t. the logits of the recorded forward pass.
    pub fn backward(&self, loss_grad: &DenseArray) -> Result<Vec<DenseArray>> {
        let rec = self.record.as_ref().ok_or(Error::NoForwardRecord)?;
        let n = rec.inputs[0].rows();
        if loss_grad.shape() != [n, self.output_dim()] {
            return Err(Error::Shape(format!(
                "loss gradient {:?} vs logits [{n}, {}]",
                loss_grad.shape(),
                self.output_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut grads: Vec<DenseArray> = Vec::with_capacity(2 * self.layers.len());
        let mut g = loss_grad.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &rec.inputs[l];
            let (out, inp) = (layer.outputs(), layer.inputs());
            let mut gw = DenseArray::zeros(&[out, inp]);
            let mut gb = DenseArray::zeros(&[out]);
            for i in 0..n {
                let gi = g.row(i);
                let xi = input.row(i);
                for o in 0..out {
                    let go = gi[o];
                    gb.data_mut()[o] += go;
                    for (w, x) in gw.row_mut(o).iter_mut().zip(xi) {
                        *w += go * x;
                    }
                }
            }
            grads.push(gb);
            grads.push(gw);
            if l == 0 {
                break;
            }
            let mut ga = DenseArray::zeros(&[n, inp]);
            for i in 0..n {
                let gi = g.row(i);
                let gai = ga.row_mut(i);
                for (o, &go) in gi.iter().enumerate() {
                    for (a, w) in gai.iter_mut().zip(layer.weight.row(o)) {
                        *a += go * w;
                    }
                }
            }
            if l == last {
                if let Some(m) = &rec.dropout_mask {
                    for (v, s) in ga.data_mut().iter_mut().zip(m) {
                        *v *= s;
                    }
                }
            }
            let z = &rec.pre_activations[l - 1];
            for (v, zv) in ga.data_mut().iter_mut().zip(z.data()) {
                if *zv <= 0.0 {
                    *v = 0.0;
                }
            }
            g = ga;
        }
        grads.reverse();
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn no_dropout_train_equals_eval() {
        let mut head = ClassifierHead::new(5, &[7], 3, 0.0, &mut rng(1)).unwrap();
        let x = DenseArray::from_vec(&[2, 5], (0..10).map(|v| v as f64 * 0.1).collect()).unwrap();
        let train = head.forward(&x, true, &mut rng(2)).unwrap();
        assert_eq!(train, head.predict(&x).unwrap());
    }

    #[test]
    fn zero_final_weights_give_bias() {
        let mut head = ClassifierHead::new(4, &[], 2, 0.0, &mut rng(1)).unwrap();
        let mut params = head.parameter_values();
        params[0] = DenseArray::zeros(&[2, 4]);
        params[1] = DenseArray::from_vec(&[2], vec![0.3, -1.2]).unwrap();
        head.load_parameters(&params).unwrap();
        let x = DenseArray::full(&[3, 4], 2.0);
        let y = head.predict(&x).unwrap();
        for i in 0..3 {
            assert_eq!(y.row(i), &[0.3, -1.2]);
        }
    }

    #[test]
    fn dropout_keep_fraction() {
        let mut head = ClassifierHead::new(10_000, &[], 1, 0.5, &mut rng(3)).unwrap();
        let x = DenseArray::full(&[1, 10_000], 1.0);
        head.forward(&x, true, &mut rng(4)).unwrap();
        let mask = head.last_dropout_mask().unwrap();
        let kept = mask.iter().filter(|&&m| m > 0.0).count() as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&kept), "{kept}");
        assert!(mask.iter().all(|&m| m == 0.0 || m == 2.0));
    }

    #[test]
    fn shape_mismatch_and_missing_record() {
        let mut head = ClassifierHead::new(3, &[], 2, 0.0, &mut rng(0)).unwrap();
        assert!(head.forward(&DenseArray::zeros(&[1, 4]), false, &mut rng(0)).is_err());
        assert!(matches!(
            head.backward(&DenseArray::zeros(&[1, 2])),
            Err(Error::NoForwardRecord)
        ));
        assert!(ClassifierHead::new(3, &[], 2, 1.0, &mut rng(0)).is_err());
    }

    #[test]
    fn zero_loss_grad_gives_zero_gradients() {
        let mut head = ClassifierHead::new(3, &[4, 4], 2, 0.3, &mut rng(5)).unwrap();
        let x = DenseArray::full(&[2, 3], 0.7);
        head.forward(&x, true, &mut rng(6)).unwrap();
        let g = head.backward(&DenseArray::zeros(&[2, 2])).unwrap();
        assert_eq!(g.len(), 6);
        assert!(g.iter().all(|a| a.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn single_layer_gradient_is_outer_product() {
        let mut head = ClassifierHead::new(3, &[], 2, 0.0, &mut rng(7)).unwrap();
        let x = DenseArray::from_vec(&[1, 3], vec![1.0, -2.0, 0.5]).unwrap();
        head.forward(&x, false, &mut rng(0)).unwrap();
        let lg = DenseArray::from_vec(&[1, 2], vec![0.25, -1.5]).unwrap();
        let g = head.backward(&lg).unwrap();
        assert_eq!(g[0].data(), &[0.25, -0.5, 0.125, -1.5, 3.0, -0.75]);
        assert_eq!(g[1].data(), &[0.25, -1.5]);
    }
}
