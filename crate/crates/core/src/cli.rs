//! The `cbcl` command line.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::classifier::{evaluate, predict_batch, predictions_csv, PredictConfig};
use crate::codec::write_atomic;
use crate::datastore::{
    generate_synthetic, join_dataset, pair_features, read_features, read_manifest,
    write_features, write_manifest, FeatureFormat, JoinedDataset, Split, SynthSpec,
};
use crate::error::{Error, Modality, Result};
use crate::introspection::{apply_merge_manifest, plan_merges, silhouette_all, silhouette_csv};
use crate::model::FusionWeights;
use crate::model_file::{load_model, save_model};
use crate::trainer::{centroid_stats, condense, fit, OrderPolicy, TrainConfig};
use crate::tuning::{tune, TuneConfig, TuneGrid};

const EXIT_CODES: &str = "\
Exit codes:
  0   success
  1   unclassified error
  2   invalid command line
  3   I/O error
  4   parse error in a CSV input
  5   bad magic bytes
  6   unsupported format version
  7   truncated file
  8   checksum mismatch
  9   dimension mismatch
  10  non-finite feature value
  11  duplicate id or label
  12  ids disagree between features and manifest
  13  unknown category label
  14  empty input or empty category
  15  silhouette needs two or more categories
  16  category smaller than the fold count
  17  modality tag mismatch
  18  invalid configuration value

Errors are printed to stderr as one line:
  error kind=<kind> code=<code> message=\"...\"

Set CBCL_THREADS to cap worker threads.";

#[derive(Debug, Parser)]
#[command(name = "cbcl", version, about = "Centroid-based concept learning on paired RGB/depth features", after_help = EXIT_CODES)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster the training split into a model file.
    Fit(FitArgs),
    /// Classify samples and write a predictions CSV.
    Predict(PredictArgs),
    /// Classify a labelled split and write an accuracy report.
    Eval(EvalArgs),
    /// Cross-validate a grid of hyperparameters on the training split.
    Tune(TuneArgs),
    /// Re-cluster a model's centroids with a larger threshold.
    Condense(CondenseArgs),
    /// Silhouette value of every training sample.
    Silhouette(SilhouetteArgs),
    /// Plan (and optionally apply) merges of confused categories.
    Merge(MergeArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Print per-category centroid statistics.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// RGB-stream feature file (CBF or CSV).
    #[arg(long)]
    pub rgb: PathBuf,
    /// Depth-stream feature file (CBF or CSV).
    #[arg(long)]
    pub depth: PathBuf,
    /// Label manifest CSV (`id,category,split`).
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct FusionArgs {
    #[arg(long = "w-rgb", default_value_t = 1.0)]
    pub w_rgb: f64,
    #[arg(long = "w-depth", default_value_t = 0.73)]
    pub w_depth: f64,
}

impl FusionArgs {
    fn weights(&self) -> Result<FusionWeights> {
        FusionWeights::new(self.w_rgb, self.w_depth)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output model path.
    #[arg(long)]
    pub model: PathBuf,
    /// Absorption threshold D (accepts `inf`).
    #[arg(long = "distance-threshold", default_value_t = 85.0)]
    pub distance_threshold: f64,
    #[command(flatten)]
    pub fusion: FusionArgs,
    /// Shuffle the training order with --seed instead of using dataset order.
    #[arg(long)]
    pub shuffle: bool,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Write the assignment trace CSV here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub rgb: PathBuf,
    #[arg(long)]
    pub depth: PathBuf,
    /// If given, predict the samples of --split in manifest order;
    /// otherwise every sample in RGB-file order.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "n-neighbors", default_value_t = 17)]
    pub n_neighbors: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Report path (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "n-neighbors", default_value_t = 17)]
    pub n_neighbors: usize,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Report path (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "grid-d", value_delimiter = ',', default_value = "85")]
    pub grid_d: Vec<f64>,
    #[arg(long = "grid-n", value_delimiter = ',', default_value = "17")]
    pub grid_n: Vec<usize>,
    #[arg(long = "grid-wd", value_delimiter = ',', default_value = "0.73")]
    pub grid_wd: Vec<f64>,
    #[arg(long = "w-rgb", default_value_t = 1.0)]
    pub w_rgb: f64,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CondenseArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// New threshold; `inf` collapses each category to one centroid.
    #[arg(long = "distance-threshold")]
    pub distance_threshold: f64,
}

#[derive(Debug, Args)]
pub struct SilhouetteArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Merge plan path (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the relabelled manifest here.
    #[arg(long = "merged-labels")]
    pub merged_labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory; receives rgb.<fmt>, depth.<fmt>, labels.csv, layouts.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Cbf)]
    pub format: FormatArg,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub categories: usize,
    #[arg(long, default_value_t = 3)]
    pub layouts: usize,
    #[arg(long = "rgb-dim", default_value_t = 16)]
    pub rgb_dim: usize,
    #[arg(long = "depth-dim", default_value_t = 16)]
    pub depth_dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub spread: f64,
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    #[arg(long = "samples-per-layout", default_value_t = 100)]
    pub samples_per_layout: usize,
    #[arg(long = "test-per-layout", default_value_t = 20)]
    pub test_per_layout: usize,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Write the statistics JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Cbf,
    Csv,
}

impl From<FormatArg> for FeatureFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Cbf => FeatureFormat::Cbf,
            FormatArg::Csv => FeatureFormat::Csv,
        }
    }
}

fn load_dataset(d: &DataArgs) -> Result<JoinedDataset> {
    let rgb = read_features(&d.rgb, Modality::Rgb)?;
    let depth = read_features(&d.depth, Modality::Depth)?;
    let manifest = read_manifest(&d.labels)?;
    let ds = join_dataset(&rgb, &depth, &manifest)?;
    info!(
        "loaded {} train / {} test samples ({}+{} dims)",
        ds.train.len(),
        ds.test.len(),
        rgb.dim(),
        depth.dim()
    );
    Ok(ds)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::InvalidValue(format!("json: {e}")))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn predict_config(n: usize) -> Result<PredictConfig> {
    if n == 0 {
        return Err(Error::InvalidConfig("--n-neighbors must be at least 1".into()));
    }
    Ok(PredictConfig::new(n))
}

pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let order = if a.shuffle {
        OrderPolicy::SeededShuffle(a.seed)
    } else {
        OrderPolicy::DatasetOrder
    };
    let cfg = TrainConfig::new(a.distance_threshold, a.fusion.weights()?)
        .with_order(order)
        .with_trace(a.trace.is_some());
    let (model, trace) = fit(&ds.train, &cfg)?;
    save_model(&model, &a.model)?;
    if let Some(path) = &a.trace {
        trace.write_csv(path)?;
    }
    println!(
        "fit: {} categories, {} centroids from {} samples",
        model.categories().len(),
        model.centroid_count(),
        ds.train.len()
    );
    Ok(())
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let rgb = read_features(&a.rgb, Modality::Rgb)?;
    let depth = read_features(&a.depth, Modality::Depth)?;
    let pairs = match &a.labels {
        Some(labels) => {
            let ds = join_dataset(&rgb, &depth, &read_manifest(labels)?)?;
            ds.split(a.split.into()).iter().map(|s| s.pair.clone()).collect()
        }
        None => pair_features(&rgb, &depth)?,
    };
    let preds = predict_batch(&model, &pairs, &predict_config(a.n_neighbors)?)?;
    write_atomic(&a.out, &predictions_csv(&preds)?)?;
    println!("predict: {} samples", preds.len());
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let ds = load_dataset(&a.data)?;
    let report = evaluate(&model, ds.split(a.split.into()), &predict_config(a.n_neighbors)?)?;
    write_atomic(&a.out, &report.to_json()?)?;
    println!(
        "eval: overall_accuracy={} mean_class_accuracy={}",
        report.overall_accuracy, report.mean_class_accuracy
    );
    Ok(())
}

pub fn cmd_tune(a: &TuneArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let grid = TuneGrid {
        distance_thresholds: a.grid_d.clone(),
        n_neighbors: a.grid_n.clone(),
        w_depth: a.grid_wd.clone(),
    };
    let cfg = TuneConfig {
        folds: a.folds,
        seed: a.seed,
        w_rgb: a.w_rgb,
        ..TuneConfig::default()
    };
    let report = tune(&ds.train, &grid, &cfg)?;
    write_atomic(&a.out, &report.to_json()?)?;
    println!(
        "tune: best distance_threshold={} n_neighbors={} w_depth={} score={}",
        report.best.distance_threshold,
        report.best.n_neighbors,
        report.best.w_depth,
        report.best.mean_score
    );
    Ok(())
}

pub fn cmd_condense(a: &CondenseArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let before = model.centroid_count();
    let out = condense(&model, a.distance_threshold)?;
    save_model(&out, &a.out)?;
    println!("condense: {before} -> {} centroids", out.centroid_count());
    Ok(())
}

pub fn cmd_silhouette(a: &SilhouetteArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let ds = load_dataset(&a.data)?;
    let records = silhouette_all(&model, ds.split(a.split.into()))?;
    write_atomic(&a.out, &silhouette_csv(&records)?)?;
    let low = records.iter().filter(|r| r.s <= 0.0).count();
    println!("silhouette: {} samples, {low} with s <= 0", records.len());
    Ok(())
}

pub fn cmd_merge(a: &MergeArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let ds = load_dataset(&a.data)?;
    let plan = plan_merges(&model, &ds.train)?;
    plan.write_json(&a.out)?;
    if let Some(path) = &a.merged_labels {
        let manifest = read_manifest(&a.data.labels)?;
        write_manifest(path, &apply_merge_manifest(&plan, &manifest)?)?;
    }
    let finals: std::collections::BTreeSet<&String> = plan.final_mapping.values().collect();
    println!(
        "merge: {} merge rounds, {} -> {} categories",
        plan.merge_rounds(),
        plan.final_mapping.len(),
        finals.len()
    );
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        categories: a.categories,
        layouts: a.layouts,
        rgb_dim: a.rgb_dim,
        depth_dim: a.depth_dim,
        spread: a.spread,
        sigma: a.sigma,
        samples_per_layout: a.samples_per_layout,
        test_per_layout: a.test_per_layout,
        seed: a.seed,
    };
    let data = generate_synthetic(&spec)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let format: FeatureFormat = a.format.into();
    let ext = format.extension();
    write_features(a.out.join(format!("rgb.{ext}")), &data.rgb, format)?;
    write_features(a.out.join(format!("depth.{ext}")), &data.depth, format)?;
    write_manifest(a.out.join("labels.csv"), &data.manifest)?;
    write_atomic(&a.out.join("layouts.csv"), &data.layouts_csv()?)?;
    println!("synth: {} samples written to {}", data.manifest.len(), a.out.display());
    Ok(())
}

pub fn cmd_inspect(a: &InspectArgs) -> Result<()> {
    let stats = centroid_stats(&load_model(&a.model)?);
    match &a.out {
        Some(path) => write_json(path, &stats),
        None => {
            let text = serde_json::to_string_pretty(&stats)
                .map_err(|e| Error::InvalidValue(format!("json: {e}")))?;
            println!("{text}");
            Ok(())
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Condense(a) => cmd_condense(a),
        Command::Silhouette(a) => cmd_silhouette(a),
        Command::Merge(a) => cmd_merge(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

/// The single-line error report printed to stderr.
pub fn error_line(e: &Error) -> String {
    format!(
        "error kind={} code={} message={:?}",
        e.kind(),
        e.exit_code(),
        e.to_string()
    )
}
