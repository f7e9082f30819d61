//! Attribute-based person retrieval: queries are the distinct masked
//! ground-truth vectors of a test set, galleries are ranked by Euclidean
//! distance between the query bits and each masked confidence row.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{AttributeMask, LabelMatrix};
use crate::error::{Error, Result};
use crate::metrics::ConfidenceMatrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    /// Bits over the active attributes, in ascending column order.
    pub bits: Vec<u8>,
    /// Gallery items whose masked ground truth equals `bits`.
    pub positive_count: usize,
}

impl Query {
    pub fn bit_string(&self) -> String {
        self.bits.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
    }
}

/// Gallery indices, best match first, with their distances.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub order: Vec<usize>,
    pub distances: Vec<f64>,
}

fn masked_row(row: &[u8], cols: &[usize]) -> Vec<u8> {
    cols.iter().map(|&j| row[j]).collect()
}

/// One query per distinct masked row, in order of first occurrence.
pub fn build_queries(test: &LabelMatrix, mask: &AttributeMask) -> Result<Vec<Query>> {
    if test.is_empty() {
        return Err(Error::Empty("query construction needs a non-empty test set"));
    }
    if mask.len() != test.n_attributes() {
        return Err(Error::Shape("mask length differs from attribute count".into()));
    }
    let cols = mask.active();
    let mut index: HashMap<Vec<u8>, usize> = HashMap::new();
    let mut queries: Vec<Query> = Vec::new();
    for i in 0..test.len() {
        let key = masked_row(test.row(i), &cols);
        match index.get(&key) {
            Some(&q) => queries[q].positive_count += 1,
            None => {
                index.insert(key.clone(), queries.len());
                queries.push(Query {
                    bits: key,
                    positive_count: 1,
                });
            }
        }
    }
    Ok(queries)
}

/// Ascending Euclidean distance over masked columns; ties by gallery index.
pub fn rank_gallery(
    query: &Query,
    conf: &ConfidenceMatrix,
    mask: &AttributeMask,
) -> Result<Ranking> {
    if conf.is_empty() {
        return Err(Error::Empty("gallery is empty"));
    }
    let cols = mask.active();
    if cols.len() != query.bits.len() || mask.len() != conf.n_attributes() {
        return Err(Error::Shape("query, mask and confidences disagree".into()));
    }
    let dist: Vec<f64> = (0..conf.len())
        .map(|i| {
            let row = conf.row(i);
            cols.iter()
                .zip(&query.bits)
                .map(|(&j, &b)| {
                    let d = row[j] - b as f64;
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut order: Vec<usize> = (0..conf.len()).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    let distances = order.iter().map(|&i| dist[i]).collect();
    Ok(Ranking { order, distances })
}

/// `(1 / positives) * sum over positive ranks k of (positives in top k) / k`.
pub fn average_precision(
    ranking: &Ranking,
    gt: &LabelMatrix,
    mask: &AttributeMask,
    query: &Query,
) -> f64 {
    let cols = mask.active();
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &i) in ranking.order.iter().enumerate() {
        let row = gt.row(i);
        if cols.iter().zip(&query.bits).all(|(&j, &b)| row[j] == b) {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    sum / query.positive_count as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub bits: String,
    pub positives: usize,
    pub ap: f64,
    pub top1_hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub num_queries: usize,
    pub map: f64,
    pub rank1: f64,
    pub per_query: Vec<QueryResult>,
}

impl RetrievalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

pub fn evaluate_retrieval(
    test: &LabelMatrix,
    conf: &ConfidenceMatrix,
    mask: &AttributeMask,
) -> Result<RetrievalReport> {
    conf.check_aligned(test)?;
    let queries = build_queries(test, mask)?;
    let cols = mask.active();
    let mut per_query = Vec::with_capacity(queries.len());
    for q in &queries {
        let ranking = rank_gallery(q, conf, mask)?;
        let ap = average_precision(&ranking, test, mask, q);
        let top = test.row(ranking.order[0]);
        let top1_hit = cols.iter().zip(&q.bits).all(|(&j, &b)| top[j] == b);
        per_query.push(QueryResult {
            bits: q.bit_string(),
            positives: q.positive_count,
            ap,
            top1_hit,
        });
    }
    let n = per_query.len() as f64;
    let map = per_query.iter().map(|r| r.ap).sum::<f64>() / n;
    let rank1 = per_query.iter().filter(|r| r.top1_hit).count() as f64 / n;
    Ok(RetrievalReport {
        num_queries: per_query.len(),
        map,
        rank1,
        per_query,
    })
}
