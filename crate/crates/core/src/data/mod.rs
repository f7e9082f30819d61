//! Annotation matrices, split protocols, attribute statistics and synthetic data.

mod manifest;
mod splits;
mod stats;
mod synth;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use manifest::{
    load_features, load_manifest, parse_features, parse_manifest, write_features, write_manifest,
};
pub use splits::{
    all_split, load_splits, upar_split_presets, Protocol, SplitSpec, UPAR_DOMAINS,
};
pub use stats::{active_attributes, attribute_stats, AttributeStats};
pub use synth::{spread_rates, synth_generate, SynthConfig, SynthPreset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Partition::Train),
            "val" => Ok(Partition::Val),
            "test" => Ok(Partition::Test),
            other => Err(Error::UnknownPartition(other.to_string())),
        }
    }
}

/// Boolean mask over schema columns; `true` marks an active attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeMask(Vec<bool>);

impl AttributeMask {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn all(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_active(&self, j: usize) -> bool {
        self.0[j]
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// Active column indices in ascending order.
    pub fn active(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(j, &b)| b.then_some(j))
            .collect()
    }
}

/// Ground-truth bits for N instances over A attributes, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMatrix {
    instance_ids: Vec<String>,
    domains: Vec<String>,
    partitions: Vec<Partition>,
    n_attributes: usize,
    labels: Vec<u8>,
}

impl LabelMatrix {
    pub fn new(
        instance_ids: Vec<String>,
        domains: Vec<String>,
        partitions: Vec<Partition>,
        n_attributes: usize,
        labels: Vec<u8>,
    ) -> Result<Self> {
        let n = instance_ids.len();
        if domains.len() != n || partitions.len() != n {
            return Err(Error::Shape(format!(
                "{n} ids but {} domains and {} partitions",
                domains.len(),
                partitions.len()
            )));
        }
        if labels.len() != n * n_attributes {
            return Err(Error::Shape(format!(
                "expected {} label cells for {n}x{n_attributes}, found {}",
                n * n_attributes,
                labels.len()
            )));
        }
        if let Some(pos) = labels.iter().position(|&v| v > 1) {
            return Err(Error::NonBinaryLabel {
                value: labels[pos].to_string(),
                line: pos / n_attributes.max(1) + 1,
                column: pos % n_attributes.max(1) + 1,
            });
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &instance_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateInstance(id.clone()));
            }
        }
        Ok(Self {
            instance_ids,
            domains,
            partitions,
            n_attributes,
            labels,
        })
    }

    /// Unlabelled-metadata convenience constructor for tests and fixtures:
    /// ids `i0..`, a single domain, test partition.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n_attributes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_attributes) {
            return Err(Error::Shape("ragged label rows".into()));
        }
        let n = rows.len();
        Self::new(
            (0..n).map(|i| format!("i{i}")).collect(),
            vec!["D".to_string(); n],
            vec![Partition::Test; n],
            n_attributes,
            rows.concat(),
        )
    }

    pub fn len(&self) -> usize {
        self.instance_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instance_ids.is_empty()
    }

    pub fn n_attributes(&self) -> usize {
        self.n_attributes
    }

    pub fn instance_ids(&self) -> &[String] {
        &self.instance_ids
    }

    pub fn domains(&self) -> &[String] {
        &self.domains
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.labels[i * self.n_attributes..(i + 1) * self.n_attributes]
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.labels[i * self.n_attributes + j]
    }

    pub fn values(&self) -> &[u8] {
        &self.labels
    }

    /// Sorted set of domain tags present.
    pub fn distinct_domains(&self) -> BTreeSet<String> {
        self.domains.iter().cloned().collect()
    }

    /// Row indices whose domain is in `domains` and whose partition matches
    /// (`None` accepts every partition), in ascending order.
    pub fn select_indices(
        &self,
        domains: &BTreeSet<String>,
        partition: Option<Partition>,
    ) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                domains.contains(&self.domains[i])
                    && partition.is_none_or(|p| self.partitions[i] == p)
            })
            .collect()
    }

    pub fn select(&self, domains: &BTreeSet<String>, partition: Option<Partition>) -> Self {
        self.take(&self.select_indices(domains, partition))
    }

    /// Rows at `indices`, in the given order.
    pub fn take(&self, indices: &[usize]) -> Self {
        let mut labels = Vec::with_capacity(indices.len() * self.n_attributes);
        for &i in indices {
            labels.extend_from_slice(self.row(i));
        }
        Self {
            instance_ids: indices.iter().map(|&i| self.instance_ids[i].clone()).collect(),
            domains: indices.iter().map(|&i| self.domains[i].clone()).collect(),
            partitions: indices.iter().map(|&i| self.partitions[i]).collect(),
            n_attributes: self.n_attributes,
            labels,
        }
    }
}

/// Real-valued per-instance features aligned row-for-row with a [`LabelMatrix`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    instance_ids: Vec<String>,
    dim: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(instance_ids: Vec<String>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != instance_ids.len() * dim {
            return Err(Error::Shape(format!(
                "expected {} feature values for {}x{dim}, found {}",
                instance_ids.len() * dim,
                instance_ids.len(),
                values.len()
            )));
        }
        Ok(Self {
            instance_ids,
            dim,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.instance_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instance_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn instance_ids(&self) -> &[String] {
        &self.instance_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn take(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            instance_ids: indices.iter().map(|&i| self.instance_ids[i].clone()).collect(),
            dim: self.dim,
            values,
        }
    }

    /// Fails on the first row whose id differs from `ids`.
    pub fn check_aligned(&self, ids: &[String]) -> Result<()> {
        check_ids_aligned(ids, &self.instance_ids)
    }
}

pub(crate) fn check_ids_aligned(expected: &[String], found: &[String]) -> Result<()> {
    for (row, (e, f)) in expected.iter().zip(found).enumerate() {
        if e != f {
            return Err(Error::Misaligned {
                row,
                expected: e.clone(),
                found: f.clone(),
            });
        }
    }
    if expected.len() != found.len() {
        let row = expected.len().min(found.len());
        return Err(Error::Misaligned {
            row,
            expected: expected.get(row).cloned().unwrap_or_else(|| "<end>".into()),
            found: found.get(row).cloned().unwrap_or_else(|| "<end>".into()),
        });
    }
    Ok(())
}

pub fn domain_set<I, S>(domains: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    domains.into_iter().map(Into::into).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> LabelMatrix {
        // 10 rows; 4 of them are (PETA, train).
        let spec = [
            ("PETA", Partition::Train),
            ("PETA", Partition::Test),
            ("MARKET", Partition::Train),
            ("PETA", Partition::Train),
            ("PETA", Partition::Val),
            ("RAPV2", Partition::Train),
            ("PETA", Partition::Train),
            ("MARKET", Partition::Test),
            ("PETA", Partition::Train),
            ("PA100K", Partition::Train),
        ];
        LabelMatrix::new(
            (0..10).map(|i| format!("r{i}")).collect(),
            spec.iter().map(|s| s.0.to_string()).collect(),
            spec.iter().map(|s| s.1).collect(),
            2,
            (0..20).map(|k| (k % 3 == 0) as u8).collect(),
        )
        .unwrap()
    }

    #[test]
    fn select_counts_rows() {
        let m = fixture();
        let sel = m.select(&domain_set(["PETA"]), Some(Partition::Train));
        assert_eq!(sel.len(), 4);
        assert_eq!(sel.instance_ids(), &["r0", "r3", "r6", "r8"]);
    }

    #[test]
    fn select_everything_is_identity() {
        let m = fixture();
        assert_eq!(m.select(&m.distinct_domains(), None), m);
    }

    #[test]
    fn select_unknown_domain_is_empty() {
        let m = fixture();
        let sel = m.select(&domain_set(["NOPE"]), None);
        assert!(sel.is_empty());
        assert_eq!(sel.n_attributes(), 2);
    }

    #[test]
    fn select_is_idempotent() {
        let m = fixture();
        let d = domain_set(["PETA", "MARKET"]);
        let once = m.select(&d, Some(Partition::Train));
        assert_eq!(once.select(&d, Some(Partition::Train)), once);
    }

    #[test]
    fn rejects_duplicate_ids_and_non_binary() {
        let err = LabelMatrix::new(
            vec!["a".into(), "a".into()],
            vec!["D".into(); 2],
            vec![Partition::Train; 2],
            1,
            vec![0, 1],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateInstance(_)));
        let err = LabelMatrix::from_rows(&[vec![0, 2]]).unwrap_err();
        assert!(matches!(err, Error::NonBinaryLabel { .. }));
    }

    #[test]
    fn misalignment_names_first_mismatch() {
        let ids: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let shuffled: Vec<String> = vec!["a".into(), "c".into(), "b".into()];
        let err = check_ids_aligned(&ids, &shuffled).unwrap_err();
        assert!(matches!(err, Error::Misaligned { row: 1, ref found, .. } if found == "c"));
    }
}
