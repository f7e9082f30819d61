//! Seeded synthetic multi-domain data.
//!
//! Each domain draws unit-variance Gaussian features around its own offset of
//! magnitude `domain_shift`. Labels come from a shared linear teacher whose
//! weights receive a per-domain perturbation, so domains agree on attribute
//! semantics but differ in distribution. Per domain and attribute, the top
//! `round(rate * n)` scores are labelled positive, which pins the realized
//! positive rate to the configured target.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{FeatureMatrix, LabelMatrix, Partition, UPAR_DOMAINS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub domains: usize,
    /// Instances per domain for train, val and test.
    pub rows_per_partition: [usize; 3],
    pub feature_dim: usize,
    pub domain_shift: f64,
    /// Target positive rate per attribute; its length sets the attribute count.
    pub target_rates: Vec<f64>,
    /// Scale of the per-domain teacher weight perturbation.
    pub teacher_noise: f64,
    /// Std of additive noise on teacher scores before thresholding.
    pub score_noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthPreset {
    /// No domain shift.
    Easy,
    /// Strong domain shift (4.0).
    Hard,
    /// Few training rows, shift 3.0; meant for deep heads that overfit.
    Overfit,
}

impl FromStr for SynthPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(SynthPreset::Easy),
            "hard" => Ok(SynthPreset::Hard),
            "overfit" => Ok(SynthPreset::Overfit),
            _ => Err(Error::InvalidConfig(format!("unknown synth preset `{s}`"))),
        }
    }
}

/// Rates spread evenly over [0.08, 0.5], rarest first.
pub fn spread_rates(n_attributes: usize) -> Vec<f64> {
    if n_attributes == 1 {
        return vec![0.3];
    }
    (0..n_attributes)
        .map(|j| 0.08 + 0.42 * j as f64 / (n_attributes - 1) as f64)
        .collect()
}

impl SynthConfig {
    pub fn preset(preset: SynthPreset, seed: u64) -> Self {
        match preset {
            SynthPreset::Easy => Self {
                domains: 4,
                rows_per_partition: [2000, 500, 500],
                feature_dim: 32,
                domain_shift: 0.0,
                target_rates: spread_rates(12),
                teacher_noise: 0.3,
                score_noise: 0.3,
                seed,
            },
            SynthPreset::Hard => Self {
                domain_shift: 4.0,
                ..Self::preset(SynthPreset::Easy, seed)
            },
            SynthPreset::Overfit => Self {
                domains: 4,
                rows_per_partition: [60, 150, 400],
                feature_dim: 32,
                domain_shift: 3.0,
                target_rates: spread_rates(8),
                teacher_noise: 0.3,
                score_noise: 0.5,
                seed,
            },
        }
    }

    pub fn n_attributes(&self) -> usize {
        self.target_rates.len()
    }

    /// The four UPAR sub-dataset tags when `domains == 4`, otherwise `D0..`.
    pub fn domain_names(&self) -> Vec<String> {
        if self.domains == UPAR_DOMAINS.len() {
            UPAR_DOMAINS.iter().map(|s| s.to_string()).collect()
        } else {
            (0..self.domains).map(|d| format!("D{d}")).collect()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.domains == 0 {
            return bad("domains must be positive");
        }
        if self.rows_per_partition.contains(&0) {
            return bad("rows per partition must be positive");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive");
        }
        if self.target_rates.is_empty() {
            return bad("at least one attribute rate is required");
        }
        if self.target_rates.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
            return bad("target rates must lie in (0, 1)");
        }
        if !(self.domain_shift >= 0.0 && self.domain_shift.is_finite()) {
            return bad("domain_shift must be finite and non-negative");
        }
        if !(self.teacher_noise >= 0.0 && self.score_noise >= 0.0) {
            return bad("noise scales must be non-negative");
        }
        Ok(())
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn synth_generate(config: &SynthConfig) -> Result<(FeatureMatrix, LabelMatrix)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.feature_dim;
    let a = config.n_attributes();
    let weight_scale = 1.0 / (dim as f64).sqrt();

    // teacher weights, attribute-major: teacher[j * dim + k]
    let teacher = normal_vec(&mut rng, a * dim, weight_scale);

    let per_domain: usize = config.rows_per_partition.iter().sum();
    let total = per_domain * config.domains;
    let mut ids = Vec::with_capacity(total);
    let mut domains = Vec::with_capacity(total);
    let mut partitions = Vec::with_capacity(total);
    let mut features = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total * a);

    for name in config.domain_names() {
        let direction = normal_vec(&mut rng, dim, 1.0);
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        let offset: Vec<f64> = direction
            .iter()
            .map(|v| config.domain_shift * v / norm)
            .collect();
        let perturbation = normal_vec(&mut rng, a * dim, config.teacher_noise * weight_scale);
        let weights: Vec<f64> = teacher.iter().zip(&perturbation).map(|(t, p)| t + p).collect();

        let mut x = Vec::with_capacity(per_domain * dim);
        for _ in 0..per_domain {
            for &o in &offset {
                x.push(o + rng.sample::<f64, _>(StandardNormal));
            }
        }
        let mut scores = vec![0.0; per_domain * a];
        for i in 0..per_domain {
            let row = &x[i * dim..(i + 1) * dim];
            for j in 0..a {
                let w = &weights[j * dim..(j + 1) * dim];
                let s: f64 = row.iter().zip(w).map(|(u, v)| u * v).sum();
                scores[i * a + j] = s + config.score_noise * rng.sample::<f64, _>(StandardNormal);
            }
        }

        let mut domain_labels = vec![0u8; per_domain * a];
        for (j, &rate) in config.target_rates.iter().enumerate() {
            let mut order: Vec<usize> = (0..per_domain).collect();
            order.sort_by(|&p, &q| scores[q * a + j].total_cmp(&scores[p * a + j]).then(p.cmp(&q)));
            let k = (rate * per_domain as f64).round() as usize;
            for &i in &order[..k] {
                domain_labels[i * a + j] = 1;
            }
        }

        let mut row = 0;
        for (p, &count) in Partition::ALL.iter().zip(&config.rows_per_partition) {
            for idx in 0..count {
                ids.push(format!("{name}_{p}_{idx:05}"));
                domains.push(name.clone());
                partitions.push(*p);
                row += 1;
            }
        }
        debug_assert_eq!(row, per_domain);
        features.extend(x);
        labels.extend(domain_labels);
    }

    let fm = FeatureMatrix::new(ids.clone(), dim, features)?;
    let lm = LabelMatrix::new(ids, domains, partitions, a, labels)?;
    Ok((fm, lm))
}
