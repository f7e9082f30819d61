//! `upar-bench` command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::data::{
    load_features, load_manifest, synth_generate, write_features, write_manifest, AttributeMask,
    LabelMatrix, Partition, Protocol, SynthConfig, SynthPreset,
};
use crate::error::{Error, Result};
use crate::metrics::{load_confidences, write_confidences, MetricReport};
use crate::nn::{write_checkpoint, OptimizerMode};
use crate::retrieval::evaluate_retrieval;
use crate::schema::{default_upar_schema, load_schema, AttributeSchema};
use crate::trainer::{
    ablate, evaluate_confidences, full_ladder, predict_confidences, run_protocol, train, Augment,
    ModelSource, SelectionMetric, TrainConfig, TrainHistory,
};

#[derive(Debug, Parser)]
#[command(name = "upar-bench", version, about = "Pedestrian attribute recognition and retrieval benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Show or validate an attribute schema.
    Schema {
        #[command(subcommand)]
        action: SchemaAction,
    },
    /// Generate a synthetic multi-domain dataset.
    Synth(SynthArgs),
    /// Train one head on the train rows of the selected domains.
    Train(TrainArgs),
    /// Run a CV, LOO or ALL protocol.
    Protocol(ProtocolArgs),
    /// Run the cumulative ablation ladder.
    Ablate(AblateArgs),
    /// Recognition metrics (plus retrieval) for a confidence file.
    Eval(EvalArgs),
    /// Attribute-based retrieval metrics for a confidence file.
    Retrieve(EvalArgs),
}

#[derive(Debug, Subcommand)]
pub enum SchemaAction {
    Show {
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    Validate {
        manifest: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output directory.
    #[arg(long, env = "UPAR_BENCH_OUT", default_value = "upar_out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "easy")]
    pub preset: SynthPreset,
    /// Rows per domain and partition (overrides the preset).
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub domains: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub attributes: Option<usize>,
    #[arg(long)]
    pub shift: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Schema JSON; the default 40-attribute schema when omitted.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
}

/// Overrides for every training hyperparameter.
#[derive(Debug, Args, Default)]
pub struct TrainOverrides {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub wd: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Comma-separated batch sizes to search, e.g. 32,64.
    #[arg(long, value_delimiter = ',')]
    pub batch_size_grid: Option<Vec<usize>>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long, overrides_with = "no_ema")]
    pub ema: bool,
    #[arg(long, overrides_with = "ema")]
    pub no_ema: bool,
    #[arg(long)]
    pub ema_decay: Option<f64>,
    #[arg(long)]
    pub optimizer: Option<OptimizerMode>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lr_factor: Option<f64>,
    #[arg(long)]
    pub min_lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub augment: Option<Augment>,
    #[arg(long)]
    pub select_metric: Option<SelectionMetric>,
    /// Comma-separated hidden layer widths; empty for a single linear layer.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainOverrides {
    pub fn resolve(&self, mut c: TrainConfig) -> TrainConfig {
        macro_rules! set {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = &self.$field { c.$target = v.clone(); })*
            };
        }
        set!(
            lr => lr, wd => weight_decay, batch_size => batch_size,
            batch_size_grid => batch_size_grid, alpha => alpha, dropout => dropout_rate,
            ema_decay => ema_decay, optimizer => optimizer, clip_norm => clip_norm,
            patience => patience, lr_factor => lr_factor, min_lr => min_lr, epochs => epochs,
            augment => augment, select_metric => selection_metric, hidden => hidden,
            threshold => threshold,
        );
        if self.ema {
            c.ema_enabled = true;
        }
        if self.no_ema {
            c.ema_enabled = false;
        }
        c.seed = self.seed;
        c
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated domains to train and evaluate on; all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub domains: Option<Vec<String>>,
    #[command(flatten)]
    pub train: TrainOverrides,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "cv")]
    pub protocol: Protocol,
    #[command(flatten)]
    pub train: TrainOverrides,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "cv")]
    pub protocol: Protocol,
    /// `full` for the six-rung ladder, `none` for the baseline row only.
    #[arg(long, default_value = "full")]
    pub ladder: String,
    #[command(flatten)]
    pub train: TrainOverrides,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub confidences: PathBuf,
    /// Restrict the manifest to one partition before aligning.
    #[arg(long)]
    pub partition: Option<Partition>,
    /// Comma-separated domains to keep before aligning; all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub domains: Option<Vec<String>>,
    #[arg(long, default_value_t = crate::metrics::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[command(flatten)]
    pub out: OutArg,
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Schema { action } => cmd_schema(action),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Protocol(a) => cmd_protocol(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Retrieve(a) => cmd_retrieve(a),
    }
}

fn schema_or_default(path: Option<&Path>) -> Result<AttributeSchema> {
    match path {
        Some(p) => load_schema(p),
        None => Ok(default_upar_schema()),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serialization cannot fail") + "\n"
}

pub fn cmd_schema(action: SchemaAction) -> Result<()> {
    match action {
        SchemaAction::Show { schema } => {
            let schema = schema_or_default(schema.as_deref())?;
            for cat in schema.categories() {
                for attr in schema.category_members(cat) {
                    println!("{cat}\t{}", attr.name);
                }
            }
            Ok(())
        }
        SchemaAction::Validate { manifest, schema } => {
            let schema = schema_or_default(schema.as_deref())?;
            let m = load_manifest(&manifest, &schema)?;
            println!(
                "{}: {} rows, {} attributes, domains {:?}",
                manifest.display(),
                m.len(),
                m.n_attributes(),
                m.distinct_domains()
            );
            Ok(())
        }
    }
}

pub fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig::preset(args.preset, args.seed);
    if let Some(r) = args.rows {
        cfg.rows_per_partition = [r; 3];
    }
    if let Some(d) = args.domains {
        cfg.domains = d;
    }
    if let Some(d) = args.dim {
        cfg.feature_dim = d;
    }
    if let Some(a) = args.attributes {
        cfg.target_rates = crate::data::spread_rates(a);
    }
    if let Some(s) = args.shift {
        cfg.domain_shift = s;
    }
    let (features, labels) = synth_generate(&cfg)?;
    let schema = AttributeSchema::synthetic(cfg.n_attributes());
    let out = &args.out.out;
    ensure_dir(out)?;
    write_manifest(create(&out.join("manifest.csv"))?, &labels, &schema)?;
    write_features(create(&out.join("features.csv"))?, &features)?;
    schema.save(out.join("schema.json"))?;
    write_text(&out.join("synth_config.json"), &to_json(&cfg))?;
    println!("wrote {} rows to {}", labels.len(), out.display());
    Ok(())
}

struct Loaded {
    schema: AttributeSchema,
    labels: LabelMatrix,
    features: crate::data::FeatureMatrix,
}

fn load_data(d: &DataArgs) -> Result<Loaded> {
    let schema = schema_or_default(d.schema.as_deref())?;
    let labels = load_manifest(&d.manifest, &schema)?;
    let features = load_features(&d.features)?;
    features.check_aligned(labels.instance_ids())?;
    Ok(Loaded {
        schema,
        labels,
        features,
    })
}

fn save_checkpoint(
    path: &Path,
    head: &crate::nn::ClassifierHead,
    config: &TrainConfig,
    step: u64,
) -> Result<()> {
    let hyper = serde_json::to_value(config).expect("config serializes");
    write_checkpoint(create(path)?, head, hyper, config.seed, step)
}

#[derive(Serialize)]
struct TrainRunReport<'a> {
    config: &'a TrainConfig,
    domains: Vec<String>,
    selected: ModelSource,
    best_epoch: usize,
    best_val_metric: f64,
    test: MetricReport,
    test_raw: MetricReport,
    test_ema: Option<MetricReport>,
    history: &'a TrainHistory,
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    let data = load_data(&args.data)?;
    let config = args.train.resolve(TrainConfig::default());
    let domains = match &args.domains {
        Some(d) => crate::data::domain_set(d.iter().map(String::as_str)),
        None => data.labels.distinct_domains(),
    };
    if let Some(missing) = domains.iter().find(|d| !data.labels.distinct_domains().contains(*d)) {
        return Err(Error::MissingDomain(missing.clone()));
    }
    let split = crate::data::SplitSpec {
        id: 0,
        protocol: Protocol::All,
        train_domains: domains.clone(),
        eval_domains: domains.clone(),
    };
    let mask = crate::data::active_attributes(&split, &data.labels)?;
    let idx = |p| data.labels.select_indices(&domains, Some(p));
    let (tr, va, te) = (idx(Partition::Train), idx(Partition::Val), idx(Partition::Test));
    let outcome = train(
        &data.features.take(&tr),
        &data.labels.take(&tr),
        &data.features.take(&va),
        &data.labels.take(&va),
        &mask,
        &config,
    )?;
    let (tx, ty) = (data.features.take(&te), data.labels.take(&te));
    if ty.is_empty() {
        return Err(Error::Empty("no test rows in the selected domains"));
    }
    let names: Vec<String> = data.schema.names().map(str::to_string).collect();
    let report_for = |head: &crate::nn::ClassifierHead| -> Result<_> {
        let conf = predict_confidences(head, &tx)?;
        let r = evaluate_confidences(&conf, &ty, &mask, config.threshold, &names, true)?;
        Ok((conf, r))
    };
    let (conf, test) = report_for(&outcome.model)?;
    let (_, test_raw) = report_for(&outcome.raw)?;
    let test_ema = outcome.ema.as_ref().map(|h| report_for(h).map(|r| r.1)).transpose()?;

    let out = &args.out.out;
    ensure_dir(out)?;
    save_checkpoint(&out.join("model.ckpt"), &outcome.model, &config, outcome.history.steps)?;
    write_confidences(create(&out.join("confidences.csv"))?, &conf, &data.schema)?;
    let report = TrainRunReport {
        config: &config,
        domains: domains.into_iter().collect(),
        selected: outcome.selected,
        best_epoch: outcome.best_epoch,
        best_val_metric: outcome.best_metric,
        test,
        test_raw,
        test_ema,
        history: &outcome.history,
    };
    write_text(&out.join("train_report.json"), &to_json(&report))?;
    eprintln!("training took {:.1}s", outcome.history.wall_time_secs);
    println!(
        "test mA {:.4}, F1 {:.4}, mAP {:.4}",
        report.test.ma,
        report.test.instance_f1,
        report.test.map.unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn cmd_protocol(args: ProtocolArgs) -> Result<()> {
    let data = load_data(&args.data)?;
    let config = args.train.resolve(TrainConfig::default());
    let run = run_protocol(args.protocol, &data.features, &data.labels, &data.schema, &config, None)?;
    let out = &args.out.out;
    ensure_dir(out)?;
    for art in &run.artifacts {
        let seeded = TrainConfig {
            seed: config.seed.wrapping_add(art.split_id as u64),
            ..config.clone()
        };
        save_checkpoint(
            &out.join(format!("split{}.ckpt", art.split_id)),
            &art.model,
            &seeded,
            art.step,
        )?;
        for (domain, conf) in &art.confidences {
            let path = out.join(format!("confidences_split{}_{domain}.csv", art.split_id));
            write_confidences(create(&path)?, conf, &data.schema)?;
        }
    }
    let stem = format!("protocol_{}", args.protocol.to_string().to_lowercase());
    write_text(&out.join(format!("{stem}.json")), &(run.to_json() + "\n"))?;
    let md = run.to_markdown();
    write_text(&out.join(format!("{stem}.md")), &md)?;
    print!("{md}");
    Ok(())
}

pub fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let data = load_data(&args.data)?;
    let base = args.train.resolve(TrainConfig::baseline());
    let ladder = match args.ladder.as_str() {
        "full" => full_ladder(),
        "none" => Vec::new(),
        other => return Err(Error::InvalidConfig(format!("unknown ladder `{other}`"))),
    };
    let report = ablate(&base, &ladder, args.protocol, &data.features, &data.labels, &data.schema, None)?;
    let out = &args.out.out;
    ensure_dir(out)?;
    write_text(&out.join("ablation.json"), &(report.to_json() + "\n"))?;
    let md = report.to_markdown();
    write_text(&out.join("ablation.md"), &md)?;
    print!("{md}");
    Ok(())
}

struct EvalInputs {
    labels: LabelMatrix,
    conf: crate::metrics::ConfidenceMatrix,
    mask: AttributeMask,
    names: Vec<String>,
}

fn load_eval(args: &EvalArgs) -> Result<EvalInputs> {
    let schema = schema_or_default(args.schema.as_deref())?;
    let mut labels = load_manifest(&args.manifest, &schema)?;
    if args.partition.is_some() || args.domains.is_some() {
        let idx: Vec<usize> = (0..labels.len())
            .filter(|&i| args.partition.is_none_or(|p| labels.partitions()[i] == p))
            .filter(|&i| {
                args.domains
                    .as_ref()
                    .is_none_or(|d| d.iter().any(|d| *d == labels.domains()[i]))
            })
            .collect();
        labels = labels.take(&idx);
    }
    let conf = load_confidences(&args.confidences, &schema)?;
    conf.check_aligned(&labels)?;
    Ok(EvalInputs {
        mask: AttributeMask::all(schema.len()),
        names: schema.names().map(str::to_string).collect(),
        labels,
        conf,
    })
}

#[derive(Serialize)]
struct EvalConfig<'a> {
    manifest: &'a Path,
    confidences: &'a Path,
    partition: Option<Partition>,
    domains: Option<&'a [String]>,
    threshold: f64,
}

#[derive(Serialize)]
struct Wrapped<'a, T> {
    config: EvalConfig<'a>,
    report: T,
}

fn eval_config(args: &EvalArgs) -> EvalConfig<'_> {
    EvalConfig {
        manifest: &args.manifest,
        confidences: &args.confidences,
        partition: args.partition,
        domains: args.domains.as_deref(),
        threshold: args.threshold,
    }
}

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    let input = load_eval(&args)?;
    let report = evaluate_confidences(
        &input.conf,
        &input.labels,
        &input.mask,
        args.threshold,
        &input.names,
        true,
    )?;
    let out = &args.out.out;
    ensure_dir(out)?;
    write_text(&out.join("eval_report.csv"), &report.to_csv())?;
    let json = to_json(&Wrapped {
        config: eval_config(&args),
        report,
    });
    write_text(&out.join("eval_report.json"), &json)?;
    print!("{json}");
    Ok(())
}

pub fn cmd_retrieve(args: EvalArgs) -> Result<()> {
    let input = load_eval(&args)?;
    let report = evaluate_retrieval(&input.labels, &input.conf, &input.mask)?;
    println!("mAP {:.6}  R-1 {:.6}  queries {}", report.map, report.rank1, report.num_queries);
    let out = &args.out.out;
    ensure_dir(out)?;
    write_text(
        &out.join("retrieval_report.json"),
        &to_json(&Wrapped {
            config: eval_config(&args),
            report,
        }),
    )
}
