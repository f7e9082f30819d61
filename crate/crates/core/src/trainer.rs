//! Training loop, evaluation, protocol execution and the ablation ladder.
//!
//! One epoch: seeded shuffle, then per mini-batch: augmentation, forward with
//! dropout, smoothed targets, weighted BCE, backward, global-norm clipping,
//! Adam/AdamW step, EMA update. At epoch end both the raw and EMA parameters
//! are validated; the better selection metric drives the plateau scheduler
//! and best-checkpoint tracking.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    active_attributes, attribute_stats, upar_split_presets, AttributeMask, FeatureMatrix,
    LabelMatrix, Partition, Protocol, SplitSpec,
};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate_split, format_mean_std, ConfidenceMatrix, DatasetReport, MeanStd, MetricReport,
    ProtocolReport, ProtocolSummary, SplitReport, DEFAULT_THRESHOLD,
};
use crate::nn::{
    adamw_step, clip_grad_norm, grid_shape, mix_augment, random_erasing, sigmoid, smooth_labels,
    weighted_bce, AdamConfig, ClassifierHead, DenseArray, EmaState, ErasingParams, LossWeights,
    MixParams, OptimizerMode, OptimizerState, PlateauEvent, SchedulerState, SmoothingConfig,
    SIMPLIFIED_MIX_OPS,
};
use crate::retrieval::evaluate_retrieval;
use crate::schema::AttributeSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    Map,
    #[serde(rename = "mA")]
    Ma,
    F1,
}

impl FromStr for SelectionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "map" => Ok(SelectionMetric::Map),
            "ma" => Ok(SelectionMetric::Ma),
            "f1" => Ok(SelectionMetric::F1),
            _ => Err(Error::InvalidConfig(format!("unknown selection metric `{s}`"))),
        }
    }
}

/// Which augmentations run on training samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Augment {
    None,
    Re,
    Mix,
    #[serde(rename = "re+mix")]
    ReMix,
}

impl Augment {
    fn erasing(self) -> bool {
        matches!(self, Augment::Re | Augment::ReMix)
    }

    fn mixing(self) -> bool {
        matches!(self, Augment::Mix | Augment::ReMix)
    }
}

impl FromStr for Augment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Augment::None),
            "re" => Ok(Augment::Re),
            "mix" => Ok(Augment::Mix),
            "re+mix" => Ok(Augment::ReMix),
            _ => Err(Error::InvalidConfig(format!("unknown augmentation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub optimizer: OptimizerMode,
    pub batch_size: usize,
    /// When non-empty, each batch size is tried and the best by validation wins.
    pub batch_size_grid: Vec<usize>,
    pub epochs: usize,
    pub alpha: f64,
    pub dropout_rate: f64,
    pub hidden: Vec<usize>,
    pub ema_enabled: bool,
    pub ema_decay: f64,
    pub clip_norm: f64,
    pub patience: usize,
    pub lr_factor: f64,
    pub min_lr: f64,
    pub weighted_loss: bool,
    pub augment: Augment,
    pub erasing: ErasingParams,
    pub mix: MixParams,
    pub selection_metric: SelectionMetric,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            optimizer: OptimizerMode::AdamW,
            batch_size: 64,
            batch_size_grid: Vec::new(),
            epochs: 30,
            alpha: 0.05,
            dropout_rate: 0.5,
            hidden: Vec::new(),
            ema_enabled: true,
            ema_decay: 0.999,
            clip_norm: 10.0,
            patience: 4,
            lr_factor: 0.1,
            min_lr: 1e-7,
            weighted_loss: true,
            augment: Augment::None,
            erasing: ErasingParams::default(),
            mix: MixParams::default(),
            selection_metric: SelectionMetric::Map,
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// The unregularized starting point of the ablation ladder: Adam, no EMA,
    /// no dropout, no smoothing, no augmentation, fixed batch size.
    pub fn baseline() -> Self {
        Self {
            optimizer: OptimizerMode::Adam,
            alpha: 0.0,
            dropout_rate: 0.0,
            ema_enabled: false,
            ..Self::default()
        }
    }

    /// Baseline training settings paired with the `overfit` synthetic preset:
    /// two wide hidden layers, a short schedule and small batches, so the
    /// head memorizes its few training rows.
    pub fn overfit_preset() -> Self {
        Self {
            hidden: vec![256, 256],
            lr: 1e-3,
            epochs: 60,
            batch_size: 32,
            ..Self::baseline()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 || self.batch_size_grid.contains(&0) {
            return bad("batch size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        SmoothingConfig::new(self.alpha)?;
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout_rate));
        }
        if self.ema_enabled && !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return bad(format!("EMA decay {} outside (0, 1)", self.ema_decay));
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip norm must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must lie in [0, 1]".into());
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            mode: self.optimizer,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSource {
    Raw,
    Ema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub lr: f64,
    pub val_raw: f64,
    pub val_ema: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub batch_size: usize,
    pub epochs: Vec<EpochRecord>,
    pub steps: u64,
    pub stopped_early: bool,
    /// Not serialized, so reports stay byte-reproducible.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the selected source at the best epoch.
    pub model: ClassifierHead,
    pub raw: ClassifierHead,
    pub ema: Option<ClassifierHead>,
    pub ema_state: Option<EmaState>,
    pub selected: ModelSource,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub history: TrainHistory,
}

/// Sigmoid confidences of `model` in evaluation mode.
pub fn predict_confidences(
    model: &ClassifierHead,
    features: &FeatureMatrix,
) -> Result<ConfidenceMatrix> {
    let a = model.output_dim();
    if features.is_empty() {
        return ConfidenceMatrix::new(Vec::new(), a, Vec::new());
    }
    let x = DenseArray::from_vec(&[features.len(), features.dim()], features.values().to_vec())?;
    let logits = model.predict(&x)?;
    let scores = logits.into_vec().into_iter().map(sigmoid).collect();
    ConfidenceMatrix::new(features.instance_ids().to_vec(), a, scores)
}

/// Recognition metrics, plus mAP/R-1 when `with_retrieval`.
pub fn evaluate(
    model: &ClassifierHead,
    features: &FeatureMatrix,
    labels: &LabelMatrix,
    mask: &AttributeMask,
    threshold: f64,
    names: &[String],
    with_retrieval: bool,
) -> Result<MetricReport> {
    if labels.is_empty() {
        return Err(Error::Empty("evaluation selection is empty"));
    }
    features.check_aligned(labels.instance_ids())?;
    let conf = predict_confidences(model, features)?;
    evaluate_confidences(&conf, labels, mask, threshold, names, with_retrieval)
}

pub fn evaluate_confidences(
    conf: &ConfidenceMatrix,
    labels: &LabelMatrix,
    mask: &AttributeMask,
    threshold: f64,
    names: &[String],
    with_retrieval: bool,
) -> Result<MetricReport> {
    let mut report = MetricReport::recognition(conf, labels, mask, threshold, names)?;
    if with_retrieval {
        let r = evaluate_retrieval(labels, conf, mask)?;
        report.map = Some(r.map);
        report.rank1 = Some(r.rank1);
    }
    Ok(report)
}

fn selection_value(
    model: &ClassifierHead,
    features: &FeatureMatrix,
    labels: &LabelMatrix,
    mask: &AttributeMask,
    config: &TrainConfig,
) -> Result<f64> {
    let conf = predict_confidences(model, features)?;
    Ok(match config.selection_metric {
        SelectionMetric::Map => evaluate_retrieval(labels, &conf, mask)?.map,
        SelectionMetric::Ma | SelectionMetric::F1 => {
            let r = MetricReport::recognition(&conf, labels, mask, config.threshold, &[])?;
            if config.selection_metric == SelectionMetric::Ma {
                r.ma
            } else {
                r.instance_f1
            }
        }
    })
}

fn augment_row(row: &[f64], config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let mut x = DenseArray::from_vec(&[row.len()], row.to_vec())?;
    if config.augment.mixing() {
        x = mix_augment(&x, &SIMPLIFIED_MIX_OPS, &config.mix, rng)?;
    }
    if config.augment.erasing() {
        let (h, w) = grid_shape(row.len());
        let img = DenseArray::from_vec(&[1, h, w], x.into_vec())?;
        x = random_erasing(&img, &config.erasing, rng)?;
    }
    Ok(x.into_vec())
}

fn head_with(template: &ClassifierHead, params: &[DenseArray]) -> Result<ClassifierHead> {
    let mut head = template.clone();
    head.load_parameters(params)?;
    Ok(head)
}

/// Trains one head at a fixed batch size.
fn train_fixed(
    train_x: &FeatureMatrix,
    train_y: &LabelMatrix,
    val_x: &FeatureMatrix,
    val_y: &LabelMatrix,
    mask: &AttributeMask,
    config: &TrainConfig,
    batch_size: usize,
) -> Result<TrainOutcome> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (n, d, a) = (train_y.len(), train_x.dim(), train_y.n_attributes());
    let mut head = ClassifierHead::new(d, &config.hidden, a, config.dropout_rate, &mut rng)?;

    let stats = attribute_stats(train_y)?;
    let weights = if config.weighted_loss {
        LossWeights::from_stats(&stats)
    } else {
        LossWeights::uniform(a)
    };
    let smoothing = SmoothingConfig::new(config.alpha)?;
    let targets = smooth_labels(train_y.values(), smoothing);

    let mut opt = OptimizerState::new(config.adam(), &head.parameters());
    let mut ema = if config.ema_enabled {
        Some(EmaState::new(config.ema_decay, &head.parameters())?)
    } else {
        None
    };
    let mut sched = SchedulerState::new(config.lr, config.patience, config.lr_factor, config.min_lr);

    let mut order: Vec<usize> = (0..n).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, ModelSource, f64, Vec<DenseArray>, Option<Vec<DenseArray>>)> =
        None;
    let mut stopped_early = false;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let m = chunk.len();
            let mut xb = Vec::with_capacity(m * d);
            let mut tb = Vec::with_capacity(m * a);
            let mut yb = Vec::with_capacity(m * a);
            for &i in chunk {
                if config.augment == Augment::None {
                    xb.extend_from_slice(train_x.row(i));
                } else {
                    xb.extend(augment_row(train_x.row(i), config, &mut rng)?);
                }
                tb.extend_from_slice(&targets[i * a..(i + 1) * a]);
                yb.extend_from_slice(train_y.row(i));
            }
            let xb = DenseArray::from_vec(&[m, d], xb)?;
            let logits = head.forward(&xb, true, &mut rng)?;
            let out = weighted_bce(&logits, &tb, &yb, &weights, mask).map_err(|e| match e {
                Error::NonFinite(msg) => {
                    Error::NonFinite(format!("{msg} at epoch {epoch}, batch {batches}"))
                }
                other => other,
            })?;
            if !out.loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss {} at epoch {epoch}, batch {batches}",
                    out.loss
                )));
            }
            let mut grads = head.backward(&out.grad)?;
            clip_grad_norm(&mut grads, config.clip_norm);
            opt.set_lr(sched.current_lr);
            adamw_step(&mut head.parameters_mut(), &grads, &mut opt)?;
            if let Some(e) = ema.as_mut() {
                e.update(&head.parameters())?;
            }
            loss_sum += out.loss;
            batches += 1;
        }

        let val_raw = selection_value(&head, val_x, val_y, mask, config)?;
        let ema_head = match &ema {
            Some(e) => Some(head_with(&head, &e.shadow)?),
            None => None,
        };
        let val_ema = match &ema_head {
            Some(h) => Some(selection_value(h, val_x, val_y, mask, config)?),
            None => None,
        };
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            lr: sched.current_lr,
            val_raw,
            val_ema,
        });

        let (source, value) = match val_ema {
            Some(v) if v > val_raw => (ModelSource::Ema, v),
            _ => (ModelSource::Raw, val_raw),
        };
        if best.as_ref().is_none_or(|b| value > b.2) {
            best = Some((
                epoch,
                source,
                value,
                head.parameter_values(),
                ema.as_ref().map(|e| e.shadow.clone()),
            ));
        }
        if sched.step(value, true) == PlateauEvent::Exhausted {
            stopped_early = true;
            break;
        }
    }

    let (best_epoch, selected, best_metric, raw_params, ema_params) =
        best.expect("at least one epoch ran");
    let raw = head_with(&head, &raw_params)?;
    let ema_model = ema_params.as_deref().map(|p| head_with(&head, p)).transpose()?;
    let model = match selected {
        ModelSource::Ema => ema_model.clone().expect("EMA selected only when enabled"),
        ModelSource::Raw => raw.clone(),
    };
    Ok(TrainOutcome {
        model,
        raw,
        ema: ema_model,
        ema_state: ema,
        selected,
        best_epoch,
        best_metric,
        history: TrainHistory {
            batch_size,
            epochs,
            steps: opt.step,
            stopped_early,
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
    })
}

/// Trains a head on `train_*`, selecting the best epoch on `val_*`. With a
/// non-empty `batch_size_grid` every size is tried and the best validation
/// result is kept.
pub fn train(
    train_x: &FeatureMatrix,
    train_y: &LabelMatrix,
    val_x: &FeatureMatrix,
    val_y: &LabelMatrix,
    mask: &AttributeMask,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_y.is_empty() {
        return Err(Error::Empty("training selection is empty"));
    }
    if val_y.is_empty() {
        return Err(Error::Empty("validation selection is empty"));
    }
    train_x.check_aligned(train_y.instance_ids())?;
    val_x.check_aligned(val_y.instance_ids())?;
    if mask.len() != train_y.n_attributes() || mask.count() == 0 {
        return Err(Error::NoIncludedAttributes);
    }
    let grid = if config.batch_size_grid.is_empty() {
        vec![config.batch_size]
    } else {
        config.batch_size_grid.clone()
    };
    let mut best: Option<TrainOutcome> = None;
    for bs in grid {
        let outcome = train_fixed(train_x, train_y, val_x, val_y, mask, config, bs)?;
        if best.as_ref().is_none_or(|b| outcome.best_metric > b.best_metric) {
            best = Some(outcome);
        }
    }
    Ok(best.expect("grid is non-empty"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRun {
    pub split: SplitSpec,
    pub active_mask: Vec<bool>,
    pub inactive_attributes: Vec<String>,
    pub selected: ModelSource,
    pub best_epoch: usize,
    pub best_val_metric: f64,
    /// Recognition metrics of the selected model on its own training rows.
    pub train_report: MetricReport,
    pub history: TrainHistory,
}

/// Per-split artifacts kept in memory for export.
#[derive(Debug, Clone)]
pub struct SplitArtifacts {
    pub split_id: usize,
    pub model: ClassifierHead,
    pub step: u64,
    pub confidences: Vec<(String, ConfidenceMatrix)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolRun {
    pub protocol: Protocol,
    pub config: TrainConfig,
    pub splits: Vec<SplitRun>,
    /// Metrics of the selected (raw or EMA) model per split.
    pub report: ProtocolReport,
    pub raw_report: ProtocolReport,
    pub ema_report: Option<ProtocolReport>,
    pub train_ma: MeanStd,
    #[serde(skip)]
    pub artifacts: Vec<SplitArtifacts>,
}

impl ProtocolRun {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn to_markdown(&self) -> String {
        let mut out = self.report.to_markdown();
        let _ = writeln!(
            out,
            "\nSelected sources: {}",
            self.splits
                .iter()
                .map(|s| format!("split {} = {:?}", s.split.id, s.selected).to_lowercase())
                .collect::<Vec<_>>()
                .join(", ")
        );
        let _ = writeln!(
            out,
            "Raw mA: {}",
            format_mean_std(&self.raw_report.summary.ma)
        );
        if let Some(e) = &self.ema_report {
            let _ = writeln!(out, "EMA mA: {}", format_mean_std(&e.summary.ma));
        }
        out
    }
}

fn splits_for(protocol: Protocol, labels: &LabelMatrix) -> Vec<SplitSpec> {
    if protocol == Protocol::All {
        let domains = labels.distinct_domains();
        vec![SplitSpec {
            id: 0,
            protocol,
            train_domains: domains.clone(),
            eval_domains: domains,
        }]
    } else {
        upar_split_presets(protocol)
    }
}

/// Runs every split of `protocol` (or of `splits` when given): mask from the
/// split's training rows, training on train-domain train rows, selection on
/// train-domain val rows, separate evaluation of each eval domain's test rows
/// (combined for ALL), then split and protocol aggregation.
pub fn run_protocol(
    protocol: Protocol,
    features: &FeatureMatrix,
    labels: &LabelMatrix,
    schema: &AttributeSchema,
    config: &TrainConfig,
    splits: Option<&[SplitSpec]>,
) -> Result<ProtocolRun> {
    config.validate()?;
    features.check_aligned(labels.instance_ids())?;
    if schema.len() != labels.n_attributes() {
        return Err(Error::Shape(format!(
            "schema has {} attributes, labels have {}",
            schema.len(),
            labels.n_attributes()
        )));
    }
    let splits: Vec<SplitSpec> = match splits {
        Some(s) => s.to_vec(),
        None => splits_for(protocol, labels),
    };
    let present = labels.distinct_domains();
    for s in &splits {
        s.validate()?;
        if let Some(d) = s
            .train_domains
            .iter()
            .chain(&s.eval_domains)
            .find(|d| !present.contains(*d))
        {
            return Err(Error::MissingDomain(d.clone()));
        }
    }
    let names: Vec<String> = schema.names().map(str::to_string).collect();

    let mut runs = Vec::new();
    let mut artifacts = Vec::new();
    let mut selected_splits = Vec::new();
    let mut raw_splits = Vec::new();
    let mut ema_splits = Vec::new();
    let mut train_mas = Vec::new();

    for split in &splits {
        let mask = active_attributes(split, labels)?;
        let tr = labels.select_indices(&split.train_domains, Some(Partition::Train));
        let va = labels.select_indices(&split.train_domains, Some(Partition::Val));
        let split_config = TrainConfig {
            seed: config.seed.wrapping_add(split.id as u64),
            ..config.clone()
        };
        let outcome = train(
            &features.take(&tr),
            &labels.take(&tr),
            &features.take(&va),
            &labels.take(&va),
            &mask,
            &split_config,
        )?;

        let eval_sets: Vec<(String, Vec<usize>)> = if split.protocol == Protocol::All {
            vec![(
                "ALL".to_string(),
                labels.select_indices(&split.eval_domains, Some(Partition::Test)),
            )]
        } else {
            split
                .eval_domains
                .iter()
                .map(|d| {
                    let one = std::iter::once(d.clone()).collect();
                    (d.clone(), labels.select_indices(&one, Some(Partition::Test)))
                })
                .collect()
        };

        let mut sel_ds = Vec::new();
        let mut raw_ds = Vec::new();
        let mut ema_ds = Vec::new();
        let mut confidences = Vec::new();
        for (domain, idx) in &eval_sets {
            let (x, y) = (features.take(idx), labels.take(idx));
            if y.is_empty() {
                return Err(Error::Empty("evaluation domain has no test rows"));
            }
            let conf_raw = predict_confidences(&outcome.raw, &x)?;
            let raw_report =
                evaluate_confidences(&conf_raw, &y, &mask, config.threshold, &names, true)?;
            let ema_conf = match &outcome.ema {
                Some(h) => Some(predict_confidences(h, &x)?),
                None => None,
            };
            let ema_report = ema_conf
                .as_ref()
                .map(|c| evaluate_confidences(c, &y, &mask, config.threshold, &names, true))
                .transpose()?;
            let (sel_report, sel_conf) = match outcome.selected {
                ModelSource::Ema => (
                    ema_report.clone().expect("EMA selected"),
                    ema_conf.clone().expect("EMA selected"),
                ),
                ModelSource::Raw => (raw_report.clone(), conf_raw),
            };
            sel_ds.push(DatasetReport {
                domain: domain.clone(),
                report: sel_report,
            });
            raw_ds.push(DatasetReport {
                domain: domain.clone(),
                report: raw_report,
            });
            if let Some(r) = ema_report {
                ema_ds.push(DatasetReport {
                    domain: domain.clone(),
                    report: r,
                });
            }
            confidences.push((domain.clone(), sel_conf));
        }

        let make_split = |ds: Vec<DatasetReport>| -> Result<SplitReport> {
            let reports: Vec<MetricReport> = ds.iter().map(|d| d.report.clone()).collect();
            Ok(SplitReport {
                split_id: split.id,
                train_domains: split.train_domains.iter().cloned().collect(),
                average: aggregate_split(&reports)?,
                datasets: ds,
            })
        };
        selected_splits.push(make_split(sel_ds)?);
        raw_splits.push(make_split(raw_ds)?);
        if !ema_ds.is_empty() {
            ema_splits.push(make_split(ema_ds)?);
        }

        let train_report = evaluate(
            &outcome.model,
            &features.take(&tr),
            &labels.take(&tr),
            &mask,
            config.threshold,
            &names,
            false,
        )?;
        train_mas.push(train_report.ma);
        runs.push(SplitRun {
            split: split.clone(),
            active_mask: mask.bits().to_vec(),
            inactive_attributes: mask
                .bits()
                .iter()
                .zip(&names)
                .filter(|(b, _)| !**b)
                .map(|(_, n)| n.clone())
                .collect(),
            selected: outcome.selected,
            best_epoch: outcome.best_epoch,
            best_val_metric: outcome.best_metric,
            train_report,
            history: outcome.history.clone(),
        });
        artifacts.push(SplitArtifacts {
            split_id: split.id,
            model: outcome.model,
            step: outcome.history.steps,
            confidences,
        });
    }

    let label = protocol.to_string();
    Ok(ProtocolRun {
        protocol,
        config: config.clone(),
        splits: runs,
        report: ProtocolReport::new(label.clone(), selected_splits)?,
        raw_report: ProtocolReport::new(label.clone(), raw_splits)?,
        ema_report: if ema_splits.is_empty() {
            None
        } else {
            Some(ProtocolReport::new(label, ema_splits)?)
        },
        train_ma: crate::metrics::mean_std(&train_mas)?,
        artifacts,
    })
}

/// One cumulative change applied on top of the previous ablation rung.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rung {
    Ema,
    BatchSizeSearch(Vec<usize>),
    Dropout(f64),
    LabelSmoothing(f64),
    AdamW,
    Augmentation(Augment),
}

impl Rung {
    pub fn apply(&self, config: &mut TrainConfig) {
        match self {
            Rung::Ema => config.ema_enabled = true,
            Rung::BatchSizeSearch(grid) => config.batch_size_grid = grid.clone(),
            Rung::Dropout(rate) => config.dropout_rate = *rate,
            Rung::LabelSmoothing(alpha) => config.alpha = *alpha,
            Rung::AdamW => config.optimizer = OptimizerMode::AdamW,
            Rung::Augmentation(a) => config.augment = *a,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Rung::Ema => "+ EMA".into(),
            Rung::BatchSizeSearch(grid) => format!(
                "+ optimal BS {{{}}}",
                grid.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(", ")
            ),
            Rung::Dropout(r) => format!("+ dropout ({r})"),
            Rung::LabelSmoothing(a) => format!("+ label smoothing ({a})"),
            Rung::AdamW => "+ AdamW".into(),
            Rung::Augmentation(a) => match a {
                Augment::None => "+ no augmentation".into(),
                Augment::Re => "+ random erasing".into(),
                Augment::Mix => "+ simplified AugMix".into(),
                Augment::ReMix => "+ random erasing + simplified AugMix".into(),
            },
        }
    }
}

/// Baseline then EMA, batch-size search, dropout, label smoothing, AdamW and
/// augmentation.
pub fn full_ladder() -> Vec<Rung> {
    vec![
        Rung::Ema,
        Rung::BatchSizeSearch(vec![32, 64]),
        Rung::Dropout(0.5),
        Rung::LabelSmoothing(0.05),
        Rung::AdamW,
        Rung::Augmentation(Augment::ReMix),
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderRow {
    pub label: String,
    pub config: TrainConfig,
    pub summary: ProtocolSummary,
    pub train_ma: MeanStd,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderReport {
    pub protocol: Protocol,
    pub rows: Vec<LadderRow>,
}

impl LadderReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn to_markdown(&self) -> String {
        let ms = |m: Option<MeanStd>| m.map(|m| format_mean_std(&m)).unwrap_or_else(|| "-".into());
        let mut out = format!("## Ablation ({})\n\n", self.protocol);
        out.push_str("| Method | mA | F1 | mAP | R-1 | train mA |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                r.label,
                format_mean_std(&r.summary.ma),
                format_mean_std(&r.summary.instance_f1),
                ms(r.summary.map),
                ms(r.summary.rank1),
                format_mean_std(&r.train_ma)
            );
        }
        out
    }
}

/// Runs the protocol once per cumulative rung, starting from `base`.
pub fn ablate(
    base: &TrainConfig,
    ladder: &[Rung],
    protocol: Protocol,
    features: &FeatureMatrix,
    labels: &LabelMatrix,
    schema: &AttributeSchema,
    splits: Option<&[SplitSpec]>,
) -> Result<LadderReport> {
    let mut config = base.clone();
    let mut rows = Vec::with_capacity(ladder.len() + 1);
    let mut label = "baseline".to_string();
    for step in 0..=ladder.len() {
        if step > 0 {
            let rung = &ladder[step - 1];
            rung.apply(&mut config);
            label = rung.label();
        }
        let run = run_protocol(protocol, features, labels, schema, &config, splits)?;
        rows.push(LadderRow {
            label: label.clone(),
            config: config.clone(),
            summary: run.report.summary.clone(),
            train_ma: run.train_ma,
        });
    }
    Ok(LadderReport { protocol, rows })
}
