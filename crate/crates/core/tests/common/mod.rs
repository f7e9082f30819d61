//! Brute-force reference implementations and seeded fixtures shared by the
//! integration tests. Written against plain vectors, independently of the
//! library code.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use upar_core::data::{AttributeMask, LabelMatrix};
use upar_core::metrics::ConfidenceMatrix;

pub struct Fixture {
    pub gt: Vec<Vec<u8>>,
    pub conf: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
}

impl Fixture {
    pub fn labels(&self) -> LabelMatrix {
        LabelMatrix::from_rows(&self.gt).unwrap()
    }

    pub fn confidences(&self) -> ConfidenceMatrix {
        let ids = (0..self.gt.len()).map(|i| format!("i{i}")).collect();
        let a = self.mask.len();
        ConfidenceMatrix::new(ids, a, self.conf.concat()).unwrap()
    }

    pub fn attribute_mask(&self) -> AttributeMask {
        AttributeMask::new(self.mask.clone())
    }

    pub fn predictions(&self, threshold: f64) -> Vec<Vec<u8>> {
        self.conf
            .iter()
            .map(|r| r.iter().map(|&c| (c >= threshold) as u8).collect())
            .collect()
    }
}

/// Random fixture with N ≤ 32, A ≤ 8. Depending on the seed it plants an
/// all-positive column, an all-negative column, an all-zero prediction row,
/// coarse (tie-prone) confidences and masked-out columns.
pub fn random_fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=32usize);
    let a = rng.random_range(1..=8usize);
    let rate: f64 = rng.random_range(0.1..0.9);
    let coarse = seed % 3 == 0;
    let mut gt: Vec<Vec<u8>> = (0..n)
        .map(|_| (0..a).map(|_| rng.random_bool(rate) as u8).collect())
        .collect();
    let mut conf: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..a)
                .map(|_| {
                    let c: f64 = rng.random();
                    if coarse { (c * 4.0).round() / 4.0 } else { c }
                })
                .collect()
        })
        .collect();
    if seed % 4 == 1 {
        let j = rng.random_range(0..a);
        gt.iter_mut().for_each(|r| r[j] = 1);
    }
    if seed % 5 == 2 {
        let j = rng.random_range(0..a);
        gt.iter_mut().for_each(|r| r[j] = 0);
    }
    if seed % 2 == 0 {
        let i = rng.random_range(0..n);
        conf[i].iter_mut().for_each(|c| *c *= 0.49);
    }
    let mut mask: Vec<bool> = (0..a).map(|_| rng.random_bool(0.85)).collect();
    if !mask.iter().any(|&b| b) {
        mask[0] = true;
    }
    Fixture { gt, conf, mask }
}

/// mA over included columns, or `None` when no column qualifies.
pub fn oracle_ma(gt: &[Vec<u8>], pred: &[Vec<u8>], mask: &[bool]) -> Option<f64> {
    let mut accs = Vec::new();
    for j in 0..mask.len() {
        if !mask[j] {
            continue;
        }
        let pos: Vec<usize> = (0..gt.len()).filter(|&i| gt[i][j] == 1).collect();
        let neg: Vec<usize> = (0..gt.len()).filter(|&i| gt[i][j] == 0).collect();
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let tpr = pos.iter().filter(|&&i| pred[i][j] == 1).count() as f64 / pos.len() as f64;
        let tnr = neg.iter().filter(|&&i| pred[i][j] == 0).count() as f64 / neg.len() as f64;
        accs.push((tpr + tnr) / 2.0);
    }
    if accs.is_empty() {
        None
    } else {
        Some(accs.iter().sum::<f64>() / accs.len() as f64)
    }
}

/// (precision, recall, F1 of the averages).
pub fn oracle_prf(gt: &[Vec<u8>], pred: &[Vec<u8>], mask: &[bool]) -> (f64, f64, f64) {
    let mut ps = Vec::new();
    let mut rs = Vec::new();
    for (y, p) in gt.iter().zip(pred) {
        let g: Vec<usize> = (0..mask.len()).filter(|&j| mask[j] && y[j] == 1).collect();
        let h: Vec<usize> = (0..mask.len()).filter(|&j| mask[j] && p[j] == 1).collect();
        let both = g.iter().filter(|j| h.contains(j)).count() as f64;
        let (pi, ri) = if g.is_empty() && h.is_empty() {
            (1.0, 1.0)
        } else {
            (
                if h.is_empty() { 0.0 } else { both / h.len() as f64 },
                if g.is_empty() { 0.0 } else { both / g.len() as f64 },
            )
        };
        ps.push(pi);
        rs.push(ri);
    }
    let p = ps.iter().sum::<f64>() / ps.len() as f64;
    let r = rs.iter().sum::<f64>() / rs.len() as f64;
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

fn masked(row: &[u8], mask: &[bool]) -> Vec<u8> {
    row.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v).collect()
}

/// Gallery order for `query` (bits over the active columns).
pub fn oracle_ranking(query: &[u8], conf: &[Vec<f64>], mask: &[bool]) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = conf
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let active: Vec<f64> = row.iter().zip(mask).filter(|(_, &m)| m).map(|(&c, _)| c).collect();
            let ss: f64 = active.iter().zip(query).map(|(c, &b)| (c - b as f64).powi(2)).sum();
            (ss.sqrt(), i)
        })
        .collect();
    keyed.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Per-query AP (first-occurrence query order), mAP and R-1.
pub fn oracle_retrieval(gt: &[Vec<u8>], conf: &[Vec<f64>], mask: &[bool]) -> (Vec<f64>, f64, f64) {
    let mut queries: Vec<Vec<u8>> = Vec::new();
    for row in gt {
        let q = masked(row, mask);
        if !queries.contains(&q) {
            queries.push(q);
        }
    }
    let mut aps = Vec::new();
    let mut top1 = 0usize;
    for q in &queries {
        let order = oracle_ranking(q, conf, mask);
        let relevant: Vec<bool> = order.iter().map(|&i| masked(&gt[i], mask) == *q).collect();
        let total = relevant.iter().filter(|&&r| r).count();
        // precision at the rank of each relevant item
        let mut precisions = Vec::new();
        for (rank, &r) in relevant.iter().enumerate() {
            if r {
                let seen = relevant[..=rank].iter().filter(|&&x| x).count();
                precisions.push(seen as f64 / (rank + 1) as f64);
            }
        }
        aps.push(precisions.iter().sum::<f64>() / total as f64);
        top1 += relevant[0] as usize;
    }
    let map = aps.iter().sum::<f64>() / aps.len() as f64;
    let r1 = top1 as f64 / queries.len() as f64;
    (aps, map, r1)
}

/// Scalar Adam/AdamW trajectory of `f(θ) = c (θ - t)^2` from `theta0`.
pub fn oracle_adam_quadratic(
    decoupled: bool,
    theta0: f64,
    c: f64,
    t: f64,
    lr: f64,
    wd: f64,
    steps: usize,
) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
    let mut out = Vec::new();
    for k in 1..=steps {
        let mut g = 2.0 * c * (theta - t);
        if decoupled {
            theta -= lr * wd * theta;
        } else {
            g += wd * theta;
        }
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(k as i32));
        let vh = v / (1.0 - b2.powi(k as i32));
        theta -= lr * mh / (vh.sqrt() + eps);
        out.push(theta);
    }
    out
}
