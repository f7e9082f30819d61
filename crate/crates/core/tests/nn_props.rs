use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use upar_core::data::AttributeMask;
use upar_core::nn::{
    adamw_step, clip_grad_norm, global_norm, sigmoid, smooth_labels, weighted_bce, AdamConfig,
    ClassifierHead, DenseArray, LossWeights, OptimizerMode, OptimizerState, SmoothingConfig,
};

fn arrays() -> impl Strategy<Value = Vec<DenseArray>> {
    prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 1..6), 1..4).prop_map(|vs| {
        vs.into_iter()
            .map(|v| DenseArray::from_vec(&[v.len()], v).unwrap())
            .collect()
    })
}

proptest! {
    #[test]
    fn smoothing_commutes_with_negation(alpha in 0.0f64..0.5, y in 0u8..2) {
        let cfg = SmoothingConfig::new(alpha).unwrap();
        let a = smooth_labels(&[1 - y], cfg)[0];
        let b = 1.0 - smooth_labels(&[y], cfg)[0];
        prop_assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn clipping_shrinks_and_keeps_direction(grads in arrays(), max in 0.01f64..100.0) {
        let before = global_norm(&grads);
        prop_assume!(before > 0.0);
        let mut clipped = grads.clone();
        clip_grad_norm(&mut clipped, max);
        let after = global_norm(&clipped);
        prop_assert!(after <= before + 1e-12);
        prop_assert!(after <= max + 1e-12);
        let dot: f64 = grads.iter().zip(&clipped)
            .flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| x * y))
            .sum();
        prop_assert!((dot / (before * after) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adam_equals_adamw_without_decay(theta in prop::collection::vec(-3.0f64..3.0, 1..5), lr in 1e-4f64..1e-1) {
        let run = |mode| {
            let mut p = DenseArray::from_vec(&[theta.len()], theta.clone()).unwrap();
            let cfg = AdamConfig { mode, lr, weight_decay: 0.0, ..AdamConfig::default() };
            let mut st = OptimizerState::new(cfg, &[&p]);
            let mut traj = Vec::new();
            for _ in 0..10 {
                let g = DenseArray::from_vec(p.shape(), p.data().iter().map(|v| 2.0 * (v - 0.7)).collect()).unwrap();
                adamw_step(&mut [&mut p], &[g], &mut st).unwrap();
                traj.push(p.data().to_vec());
            }
            traj
        };
        let (a, b) = (run(OptimizerMode::Adam), run(OptimizerMode::AdamW));
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

/// Loss of a single logit against a smoothed target, weight keyed by the hard label.
fn scalar_loss(x: f64, target: f64, label: u8, w: &LossWeights) -> f64 {
    let logits = DenseArray::from_vec(&[1, 1], vec![x]).unwrap();
    weighted_bce(&logits, &[target], &[label], w, &AttributeMask::all(1)).unwrap().loss
}

#[test]
fn smoothed_loss_minimized_at_smoothed_target() {
    let w = LossWeights::from_ratios(&[0.3]);
    for &alpha in &[0.05, 0.1, 0.3] {
        for y in [0u8, 1] {
            let t = smooth_labels(&[y], SmoothingConfig::new(alpha).unwrap())[0];
            let (mut lo, mut hi) = (-20.0f64, 20.0f64);
            let phi = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..200 {
                let a = hi - phi * (hi - lo);
                let b = lo + phi * (hi - lo);
                if scalar_loss(a, t, y, &w) < scalar_loss(b, t, y, &w) {
                    hi = b;
                } else {
                    lo = a;
                }
            }
            let x = (lo + hi) / 2.0;
            let expected = (t / (1.0 - t)).ln();
            assert!((x - expected).abs() < 1e-6, "alpha {alpha} y {y}: {x} vs {expected}");
            assert!((sigmoid(x) - t).abs() < 1e-6);
        }
    }
}

#[test]
fn inverted_dropout_preserves_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut head = ClassifierHead::new(4, &[6], 3, 0.5, &mut rng).unwrap();
    let x = DenseArray::from_vec(&[1, 4], vec![0.9, -0.4, 1.3, 0.2]).unwrap();
    let reference = head.predict(&x).unwrap();
    let draws = 10_000;
    let (mut sum, mut sq) = (vec![0.0; 3], vec![0.0; 3]);
    for _ in 0..draws {
        let out = head.forward(&x, true, &mut rng).unwrap();
        for (k, v) in out.data().iter().enumerate() {
            sum[k] += v;
            sq[k] += v * v;
        }
    }
    let n = draws as f64;
    for k in 0..3 {
        let mean = sum[k] / n;
        let var = (sq[k] / n - mean * mean).max(0.0);
        // five standard errors of the Monte Carlo mean
        let tol = 5.0 * (var / n).sqrt() + 1e-12;
        let r = reference.data()[k];
        assert!((mean - r).abs() < tol, "{mean} vs {r} (tol {tol})");
    }
}

#[test]
fn eval_forward_ignores_dropout() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut head = ClassifierHead::new(3, &[], 2, 0.0, &mut rng).unwrap();
    let x = DenseArray::from_vec(&[2, 3], vec![0.1, 0.2, 0.3, -1.0, 0.5, 2.0]).unwrap();
    let train = head.forward(&x, true, &mut rng).unwrap();
    assert_eq!(train, head.predict(&x).unwrap());
}
