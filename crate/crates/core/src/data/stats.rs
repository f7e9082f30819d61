use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{AttributeMask, LabelMatrix, Partition, SplitSpec};

/// Per-attribute positive counts and ratios (`r_j`) over a row selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeStats {
    pub n_rows: usize,
    pub positive_count: Vec<usize>,
    pub positive_ratio: Vec<f64>,
}

pub fn attribute_stats(matrix: &LabelMatrix) -> Result<AttributeStats> {
    if matrix.is_empty() {
        return Err(Error::Empty("attribute statistics need at least one row"));
    }
    let mut positive_count = vec![0usize; matrix.n_attributes()];
    for i in 0..matrix.len() {
        for (c, &v) in positive_count.iter_mut().zip(matrix.row(i)) {
            *c += v as usize;
        }
    }
    let n = matrix.len() as f64;
    let positive_ratio = positive_count.iter().map(|&c| c as f64 / n).collect();
    Ok(AttributeStats {
        n_rows: matrix.len(),
        positive_count,
        positive_ratio,
    })
}

/// Attributes with at least one positive among the split's training rows.
pub fn active_attributes(split: &SplitSpec, matrix: &LabelMatrix) -> Result<AttributeMask> {
    let train = matrix.select(&split.train_domains, Some(Partition::Train));
    if train.is_empty() {
        return Err(Error::Empty("split has no training rows"));
    }
    let stats = attribute_stats(&train)?;
    Ok(AttributeMask::new(
        stats.positive_count.iter().map(|&c| c > 0).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{domain_set, Protocol};

    #[test]
    fn ratios_from_counts() {
        let m = LabelMatrix::from_rows(&[
            vec![1, 1, 0],
            vec![1, 0, 0],
            vec![1, 0, 0],
            vec![1, 1, 0],
        ])
        .unwrap();
        let s = attribute_stats(&m).unwrap();
        assert_eq!(s.positive_count, vec![4, 2, 0]);
        assert_eq!(s.positive_ratio, vec![1.0, 0.5, 0.0]);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        let m = LabelMatrix::from_rows(&[]).unwrap();
        assert!(attribute_stats(&m).is_err());
    }

    fn split_fixture() -> (SplitSpec, LabelMatrix) {
        // 5 attributes; columns 1 and 3 never positive in PETA/train rows,
        // although they are positive elsewhere.
        let rows: [(&str, Partition, [u8; 5]); 5] = [
            ("PETA", Partition::Train, [1, 0, 0, 0, 1]),
            ("PETA", Partition::Train, [0, 0, 1, 0, 0]),
            ("PETA", Partition::Test, [1, 1, 1, 1, 1]),
            ("MARKET", Partition::Train, [0, 1, 0, 1, 0]),
            ("PETA", Partition::Val, [0, 1, 0, 1, 0]),
        ];
        let m = LabelMatrix::new(
            (0..rows.len()).map(|i| format!("r{i}")).collect(),
            rows.iter().map(|r| r.0.to_string()).collect(),
            rows.iter().map(|r| r.1).collect(),
            5,
            rows.iter().flat_map(|r| r.2).collect(),
        )
        .unwrap();
        let split = SplitSpec {
            id: 0,
            protocol: Protocol::Cv,
            train_domains: domain_set(["PETA"]),
            eval_domains: domain_set(["MARKET"]),
        };
        (split, m)
    }

    #[test]
    fn mask_excludes_attributes_without_training_positives() {
        let (split, m) = split_fixture();
        let mask = active_attributes(&split, &m).unwrap();
        assert_eq!(mask.bits(), &[true, false, true, false, true]);
        assert_eq!(mask.count(), 3);
    }

    #[test]
    fn mask_is_monotone_in_training_rows() {
        let (mut split, m) = split_fixture();
        let before = active_attributes(&split, &m).unwrap();
        split.train_domains.insert("MARKET".into());
        let after = active_attributes(&split, &m).unwrap();
        for j in 0..5 {
            assert!(!before.is_active(j) || after.is_active(j));
        }
        assert_eq!(after.count(), 5);
    }

    #[test]
    fn empty_training_selection_is_an_error() {
        let (mut split, m) = split_fixture();
        split.train_domains = domain_set(["RAPV2"]);
        assert!(active_attributes(&split, &m).is_err());
    }
}
