//! Label-based (mA) and instance-based (P/R/F1) recognition metrics, and the
//! two-level aggregation: mean over eval datasets within a split, then
//! mean ± population std across splits.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{check_ids_aligned, AttributeMask, LabelMatrix};
use crate::error::{Error, Result};
use crate::schema::AttributeSchema;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Predicted per-attribute confidences in [0, 1], row-aligned with a [`LabelMatrix`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceMatrix {
    instance_ids: Vec<String>,
    n_attributes: usize,
    scores: Vec<f64>,
}

impl ConfidenceMatrix {
    pub fn new(instance_ids: Vec<String>, n_attributes: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != instance_ids.len() * n_attributes {
            return Err(Error::Shape(format!(
                "expected {} scores for {}x{n_attributes}, found {}",
                instance_ids.len() * n_attributes,
                instance_ids.len(),
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::InvalidConfig(format!(
                "confidence {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            instance_ids,
            n_attributes,
            scores,
        })
    }

    /// Confidences equal to the ground-truth bits.
    pub fn from_labels(gt: &LabelMatrix) -> Self {
        Self {
            instance_ids: gt.instance_ids().to_vec(),
            n_attributes: gt.n_attributes(),
            scores: gt.values().iter().map(|&v| v as f64).collect(),
        }
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

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.n_attributes..(i + 1) * self.n_attributes]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn check_aligned(&self, gt: &LabelMatrix) -> Result<()> {
        check_ids_aligned(gt.instance_ids(), &self.instance_ids)?;
        if self.n_attributes != gt.n_attributes() {
            return Err(Error::Shape(format!(
                "{} confidence columns vs {} label columns",
                self.n_attributes,
                gt.n_attributes()
            )));
        }
        Ok(())
    }

    pub fn take(&self, indices: &[usize]) -> Self {
        let mut scores = Vec::with_capacity(indices.len() * self.n_attributes);
        for &i in indices {
            scores.extend_from_slice(self.row(i));
        }
        Self {
            instance_ids: indices.iter().map(|&i| self.instance_ids[i].clone()).collect(),
            n_attributes: self.n_attributes,
            scores,
        }
    }
}

pub fn load_confidences(
    path: impl AsRef<Path>,
    schema: &AttributeSchema,
) -> Result<ConfidenceMatrix> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_confidences(file, schema)
}

/// CSV with header `instance_id,<attribute names in schema order>`.
pub fn parse_confidences<R: Read>(reader: R, schema: &AttributeSchema) -> Result<ConfidenceMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::parse("confidence header", e))?
        .clone();
    if header.is_empty() || &header[0] != "instance_id" {
        return Err(Error::ColumnMismatch(
            "confidence header must start with instance_id".into(),
        ));
    }
    if header.iter().skip(1).ne(schema.names()) {
        return Err(Error::ColumnMismatch(
            "confidence columns must list the schema attributes in order".into(),
        ));
    }
    let mut ids = Vec::new();
    let mut scores = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let line = row_idx + 2;
        let record = record.map_err(|e| Error::parse(format!("confidence line {line}"), e))?;
        if record.len() != header.len() {
            return Err(Error::parse(
                format!("confidence line {line}"),
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        ids.push(record[0].to_string());
        for cell in record.iter().skip(1) {
            scores.push(
                cell.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(format!("confidence line {line}"), e))?,
            );
        }
    }
    ConfidenceMatrix::new(ids, schema.len(), scores)
}

pub fn write_confidences<W: Write>(
    writer: W,
    conf: &ConfidenceMatrix,
    schema: &AttributeSchema,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["instance_id".to_string()];
    header.extend(schema.names().map(str::to_string));
    w.write_record(&header).map_err(|e| Error::parse("confidence write", e))?;
    for i in 0..conf.len() {
        let mut rec = vec![conf.instance_ids()[i].clone()];
        rec.extend(conf.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| Error::parse("confidence write", e))?;
    }
    w.flush().map_err(|e| Error::parse("confidence write", e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionMatrix {
    n_rows: usize,
    n_attributes: usize,
    values: Vec<u8>,
}

impl PredictionMatrix {
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n_attributes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_attributes) {
            return Err(Error::Shape("ragged prediction rows".into()));
        }
        if rows.iter().flatten().any(|&v| v > 1) {
            return Err(Error::InvalidConfig("predictions must be binary".into()));
        }
        Ok(Self {
            n_rows: rows.len(),
            n_attributes,
            values: rows.concat(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_attributes(&self) -> usize {
        self.n_attributes
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.values[i * self.n_attributes..(i + 1) * self.n_attributes]
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.values[i * self.n_attributes + j]
    }
}

/// Entry is 1 iff `score >= threshold`.
pub fn binarize(conf: &ConfidenceMatrix, threshold: f64) -> PredictionMatrix {
    PredictionMatrix {
        n_rows: conf.len(),
        n_attributes: conf.n_attributes(),
        values: conf.scores().iter().map(|&s| (s >= threshold) as u8).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    /// No positive sample in the split's training rows.
    NoTrainingPositive,
    /// No positive sample in the evaluated rows.
    NoTestPositive,
    /// No negative sample in the evaluated rows.
    NoTestNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDetail {
    pub column: usize,
    pub name: String,
    pub positives: usize,
    pub negatives: usize,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub mean_acc: Option<f64>,
    pub excluded_reason: Option<ExclusionReason>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanAccuracy {
    pub ma: f64,
    pub per_attribute: Vec<AttributeDetail>,
}

fn check_shapes(pred: &PredictionMatrix, gt: &LabelMatrix, mask: &AttributeMask) -> Result<()> {
    if pred.n_rows() != gt.len() || pred.n_attributes() != gt.n_attributes() {
        return Err(Error::Shape(format!(
            "predictions {}x{} vs labels {}x{}",
            pred.n_rows(),
            pred.n_attributes(),
            gt.len(),
            gt.n_attributes()
        )));
    }
    if mask.len() != gt.n_attributes() {
        return Err(Error::Shape(format!(
            "mask of length {} for {} attributes",
            mask.len(),
            gt.n_attributes()
        )));
    }
    Ok(())
}

/// Mean of per-attribute `(TPR + TNR) / 2` over masked attributes that have
/// both classes in `gt`. Other attributes are reported with a reason.
pub fn mean_accuracy(
    pred: &PredictionMatrix,
    gt: &LabelMatrix,
    mask: &AttributeMask,
) -> Result<MeanAccuracy> {
    check_shapes(pred, gt, mask)?;
    let a = gt.n_attributes();
    let mut tp = vec![0usize; a];
    let mut tn = vec![0usize; a];
    let mut pos = vec![0usize; a];
    for i in 0..gt.len() {
        for (j, (&y, &p)) in gt.row(i).iter().zip(pred.row(i)).enumerate() {
            if y == 1 {
                pos[j] += 1;
                tp[j] += p as usize;
            } else {
                tn[j] += (p == 0) as usize;
            }
        }
    }
    let n = gt.len();
    let mut per_attribute = Vec::with_capacity(a);
    let mut sum = 0.0;
    let mut included = 0usize;
    for j in 0..a {
        let negatives = n - pos[j];
        let tpr = (pos[j] > 0).then(|| tp[j] as f64 / pos[j] as f64);
        let tnr = (negatives > 0).then(|| tn[j] as f64 / negatives as f64);
        let excluded_reason = if !mask.is_active(j) {
            Some(ExclusionReason::NoTrainingPositive)
        } else if pos[j] == 0 {
            Some(ExclusionReason::NoTestPositive)
        } else if negatives == 0 {
            Some(ExclusionReason::NoTestNegative)
        } else {
            None
        };
        let mean_acc = match (tpr, tnr, excluded_reason) {
            (Some(p), Some(q), None) => {
                let m = (p + q) / 2.0;
                sum += m;
                included += 1;
                Some(m)
            }
            _ => None,
        };
        per_attribute.push(AttributeDetail {
            column: j,
            name: format!("{j}"),
            positives: pos[j],
            negatives,
            tpr,
            tnr,
            mean_acc,
            excluded_reason,
        });
    }
    if included == 0 {
        return Err(Error::NoIncludedAttributes);
    }
    Ok(MeanAccuracy {
        ma: sum / included as f64,
        per_attribute,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceScores {
    pub precision: f64,
    pub recall: f64,
    /// Harmonic mean of the instance-averaged precision and recall.
    pub f1: f64,
    /// Mean of per-instance F1 values, kept for comparison.
    pub f1_per_instance: f64,
}

pub(crate) fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Per-instance set precision/recall over masked columns.
///
/// Empty sets: no predictions gives p = 0, no ground truth gives r = 0, and
/// both empty gives p = r = 1.
pub fn instance_prf(
    pred: &PredictionMatrix,
    gt: &LabelMatrix,
    mask: &AttributeMask,
) -> Result<InstanceScores> {
    check_shapes(pred, gt, mask)?;
    if gt.is_empty() {
        return Err(Error::Empty("instance metrics need at least one row"));
    }
    let cols = mask.active();
    let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
    for i in 0..gt.len() {
        let (y, p) = (gt.row(i), pred.row(i));
        let (mut inter, mut n_pred, mut n_gt) = (0usize, 0usize, 0usize);
        for &j in &cols {
            inter += (y[j] & p[j]) as usize;
            n_pred += p[j] as usize;
            n_gt += y[j] as usize;
        }
        let (pi, ri) = match (n_pred, n_gt) {
            (0, 0) => (1.0, 1.0),
            (0, _) => (0.0, 0.0),
            (_, 0) => (0.0, 0.0),
            _ => (inter as f64 / n_pred as f64, inter as f64 / n_gt as f64),
        };
        sp += pi;
        sr += ri;
        sf += harmonic(pi, ri);
    }
    let n = gt.len() as f64;
    let (precision, recall) = (sp / n, sr / n);
    Ok(InstanceScores {
        precision,
        recall,
        f1: harmonic(precision, recall),
        f1_per_instance: sf / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedAttribute {
    pub name: String,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub threshold: f64,
    pub n_instances: usize,
    #[serde(rename = "mA")]
    pub ma: f64,
    pub instance_precision: f64,
    pub instance_recall: f64,
    pub instance_f1: f64,
    pub instance_f1_per_instance: Option<f64>,
    pub map: Option<f64>,
    pub rank1: Option<f64>,
    pub per_attribute: Vec<AttributeDetail>,
    pub excluded_attributes: Vec<ExcludedAttribute>,
}

impl MetricReport {
    /// Binarizes `conf` at `threshold` and computes mA and instance P/R/F1.
    /// Retrieval fields are left empty.
    pub fn recognition(
        conf: &ConfidenceMatrix,
        gt: &LabelMatrix,
        mask: &AttributeMask,
        threshold: f64,
        names: &[String],
    ) -> Result<Self> {
        conf.check_aligned(gt)?;
        if gt.is_empty() {
            return Err(Error::Empty("evaluation selection is empty"));
        }
        let pred = binarize(conf, threshold);
        let mut ma = mean_accuracy(&pred, gt, mask)?;
        for d in &mut ma.per_attribute {
            if let Some(n) = names.get(d.column) {
                d.name = n.clone();
            }
        }
        let inst = instance_prf(&pred, gt, mask)?;
        let excluded_attributes = ma
            .per_attribute
            .iter()
            .filter_map(|d| {
                d.excluded_reason.map(|reason| ExcludedAttribute {
                    name: d.name.clone(),
                    reason,
                })
            })
            .collect();
        Ok(Self {
            threshold,
            n_instances: gt.len(),
            ma: ma.ma,
            instance_precision: inst.precision,
            instance_recall: inst.recall,
            instance_f1: inst.f1,
            instance_f1_per_instance: Some(inst.f1_per_instance),
            map: None,
            rank1: None,
            per_attribute: ma.per_attribute,
            excluded_attributes,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Long-format CSV: `section,name,metric,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,name,metric,value\n");
        let mut push = |section: &str, name: &str, metric: &str, value: String| {
            let _ = writeln!(out, "{section},{name},{metric},{value}");
        };
        push("overall", "", "threshold", self.threshold.to_string());
        push("overall", "", "n_instances", self.n_instances.to_string());
        push("overall", "", "mA", self.ma.to_string());
        push("overall", "", "instance_precision", self.instance_precision.to_string());
        push("overall", "", "instance_recall", self.instance_recall.to_string());
        push("overall", "", "instance_f1", self.instance_f1.to_string());
        if let Some(v) = self.instance_f1_per_instance {
            push("overall", "", "instance_f1_per_instance", v.to_string());
        }
        if let Some(v) = self.map {
            push("overall", "", "mAP", v.to_string());
        }
        if let Some(v) = self.rank1 {
            push("overall", "", "rank1", v.to_string());
        }
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for d in &self.per_attribute {
            push("attribute", &d.name, "tpr", opt(d.tpr));
            push("attribute", &d.name, "tnr", opt(d.tnr));
            push("attribute", &d.name, "mean_acc", opt(d.mean_acc));
            if let Some(r) = d.excluded_reason {
                let reason = serde_json::to_value(r).expect("enum serializes");
                push(
                    "attribute",
                    &d.name,
                    "excluded_reason",
                    reason.as_str().unwrap_or_default().to_string(),
                );
            }
        }
        out
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    s / n as f64
}

fn mean_opt(values: impl Iterator<Item = Option<f64>> + Clone) -> Option<f64> {
    if values.clone().all(|v| v.is_some()) {
        Some(mean(values.flatten()))
    } else {
        None
    }
}

/// Unweighted mean of every scalar metric across eval datasets.
///
/// Per-attribute detail stays on the per-dataset reports; the aggregate keeps
/// the union of exclusion records.
pub fn aggregate_split(reports: &[MetricReport]) -> Result<MetricReport> {
    let first = reports
        .first()
        .ok_or(Error::Empty("no reports to aggregate"))?;
    if reports.len() == 1 {
        return Ok(first.clone());
    }
    let mut excluded: Vec<ExcludedAttribute> = Vec::new();
    for r in reports {
        for e in &r.excluded_attributes {
            if !excluded.contains(e) {
                excluded.push(e.clone());
            }
        }
    }
    // schema column order, independent of report order
    let column = |name: &str| first.per_attribute.iter().position(|d| d.name == name);
    excluded.sort_by(|a, b| {
        (column(&a.name), &a.name, a.reason).cmp(&(column(&b.name), &b.name, b.reason))
    });
    Ok(MetricReport {
        threshold: first.threshold,
        n_instances: reports.iter().map(|r| r.n_instances).sum(),
        ma: mean(reports.iter().map(|r| r.ma)),
        instance_precision: mean(reports.iter().map(|r| r.instance_precision)),
        instance_recall: mean(reports.iter().map(|r| r.instance_recall)),
        instance_f1: mean(reports.iter().map(|r| r.instance_f1)),
        instance_f1_per_instance: mean_opt(reports.iter().map(|r| r.instance_f1_per_instance)),
        map: mean_opt(reports.iter().map(|r| r.map)),
        rank1: mean_opt(reports.iter().map(|r| r.rank1)),
        per_attribute: Vec::new(),
        excluded_attributes: excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Arithmetic mean and population standard deviation (divisor n).
pub fn mean_std(values: &[f64]) -> Result<MeanStd> {
    if values.is_empty() {
        return Err(Error::Empty("no values for mean/std"));
    }
    let m = mean(values.iter().copied());
    let var = mean(values.iter().map(|v| (v - m) * (v - m)));
    Ok(MeanStd {
        mean: m,
        std: var.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSummary {
    #[serde(rename = "mA")]
    pub ma: MeanStd,
    pub instance_precision: MeanStd,
    pub instance_recall: MeanStd,
    pub instance_f1: MeanStd,
    pub map: Option<MeanStd>,
    pub rank1: Option<MeanStd>,
}

pub fn aggregate_protocol(split_reports: &[MetricReport]) -> Result<ProtocolSummary> {
    if split_reports.is_empty() {
        return Err(Error::Empty("no split reports to aggregate"));
    }
    let col = |f: fn(&MetricReport) -> f64| -> Vec<f64> { split_reports.iter().map(f).collect() };
    let opt_col = |f: fn(&MetricReport) -> Option<f64>| -> Option<Vec<f64>> {
        split_reports.iter().map(f).collect()
    };
    Ok(ProtocolSummary {
        ma: mean_std(&col(|r| r.ma))?,
        instance_precision: mean_std(&col(|r| r.instance_precision))?,
        instance_recall: mean_std(&col(|r| r.instance_recall))?,
        instance_f1: mean_std(&col(|r| r.instance_f1))?,
        map: opt_col(|r| r.map).map(|v| mean_std(&v)).transpose()?,
        rank1: opt_col(|r| r.rank1).map(|v| mean_std(&v)).transpose()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub domain: String,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub split_id: usize,
    pub train_domains: Vec<String>,
    pub datasets: Vec<DatasetReport>,
    pub average: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub protocol: String,
    pub per_split: Vec<SplitReport>,
    pub summary: ProtocolSummary,
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

pub fn format_mean_std(m: &MeanStd) -> String {
    format!("{} ± {}", pct(m.mean), pct(m.std))
}

impl ProtocolReport {
    pub fn new(protocol: impl Into<String>, per_split: Vec<SplitReport>) -> Result<Self> {
        let averages: Vec<MetricReport> = per_split.iter().map(|s| s.average.clone()).collect();
        let summary = aggregate_protocol(&averages)?;
        Ok(Self {
            protocol: protocol.into(),
            per_split,
            summary,
        })
    }

    /// One section per split plus a `mean ± std` footer; percentages with one decimal.
    pub fn to_markdown(&self) -> String {
        let opt = |v: Option<f64>| v.map(pct).unwrap_or_else(|| "-".into());
        let mut out = String::new();
        let _ = writeln!(out, "## Protocol {}\n", self.protocol);
        for s in &self.per_split {
            let _ = writeln!(
                out,
                "### Split {} (train: {})\n",
                s.split_id,
                s.train_domains.join(", ")
            );
            out.push_str("| Eval | mA | Precision | Recall | F1 | mAP | R-1 |\n");
            out.push_str("|---|---|---|---|---|---|---|\n");
            let rows = s
                .datasets
                .iter()
                .map(|d| (d.domain.as_str(), &d.report))
                .chain(std::iter::once(("average", &s.average)));
            for (name, r) in rows {
                let _ = writeln!(
                    out,
                    "| {name} | {} | {} | {} | {} | {} | {} |",
                    pct(r.ma),
                    pct(r.instance_precision),
                    pct(r.instance_recall),
                    pct(r.instance_f1),
                    opt(r.map),
                    opt(r.rank1)
                );
            }
            out.push('\n');
        }
        let ms = |m: Option<MeanStd>| m.map(|m| format_mean_std(&m)).unwrap_or_else(|| "-".into());
        let sm = &self.summary;
        out.push_str("### mean ± std across splits\n\n");
        out.push_str("| mA | Precision | Recall | F1 | mAP | R-1 |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            format_mean_std(&sm.ma),
            format_mean_std(&sm.instance_precision),
            format_mean_std(&sm.instance_recall),
            format_mean_std(&sm.instance_f1),
            ms(sm.map),
            ms(sm.rank1)
        );
        out
    }
}
