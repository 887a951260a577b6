//! Command-line front end.
//!
//! ```text
//! vstain [--threads N] [--config FILE] <synth|train|predict|evaluate|gradcheck|ablate> [flags]
//! ```
//!
//! A config file holds `key = value` lines (`#` starts a comment) where each
//! key is the long name of a flag of the chosen subcommand. File values are
//! applied first, so flags given on the command line win. Exit codes: 0 on
//! success, 1 on runtime or I/O failure, 2 on invalid configuration, 3 when
//! training diverges.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::gradcheck::{run_check, Check};
use crate::image::{normalize_min_max, Image2D, Organelle};
use crate::imageio::{read_image, write_image};
use crate::metrics::{aggregate, evaluate_pair, format_table, wilcoxon_signed_rank, Metric, MetricRow, Report};
use crate::model::{load_checkpoint, save_checkpoint, AdamConfig, Model, ModelConfig, Strategy};
use crate::objective::{ObjectiveWeights, SsimConfig};
use crate::synth::{generate, SynthConfig, SynthError};
use crate::trainer::{
    build_index, predict_image, predict_resampled, read_manifest, train_with_progress, write_history, DatasetIndex,
    InputMode, SampleRecord, Split, SplitMode, TrainConfig, TrainError,
};

pub mod ablate;

pub const EXIT_OK: u8 = 0;
pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

pub const CHECKPOINT_NAME: &str = "model.lmck";
pub const HISTORY_NAME: &str = "history.csv";
pub const REPORT_NAME: &str = "report.csv";

#[derive(Debug, Parser)]
#[command(name = "vstain", version, about = "Virtual staining: synthesis, training, prediction and evaluation")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// `key = value` file with defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-study dataset.
    Synth(SynthArgs),
    /// Train a model and write its checkpoint and loss history.
    Train(TrainArgs),
    /// Predict organelle channels for input images.
    Predict(PredictArgs),
    /// Score predictions against manifest targets.
    Evaluate(EvaluateArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Train and score variants along the strategy, patch-size and objective axes.
    Ablate(ablate::AblateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub studies: usize,
    #[arg(long = "per-study", default_value_t = 10)]
    pub per_study: usize,
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    /// Presence probabilities for nucleus,mitochondria,tubulin,actin.
    #[arg(long, default_value = "1.0,0.8,0.3,0.15", value_parser = parse_floats::<4>)]
    pub sparsity: [f64; 4],
    /// Relative weights of BF,PC,DIC inputs.
    #[arg(long = "modality-mix", default_value = "1,1,1", value_parser = parse_floats::<3>)]
    pub modality_mix: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Separate,
    Shared,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitModeArg {
    Image,
    Study,
}

impl From<SplitModeArg> for SplitMode {
    fn from(m: SplitModeArg) -> Self {
        match m {
            SplitModeArg::Image => SplitMode::Image,
            SplitModeArg::Study => SplitMode::Study,
        }
    }
}

/// Dataset split flags shared by train, evaluate and ablate.
#[derive(Clone, Debug, Args)]
pub struct SplitArgs {
    #[arg(long = "split-ratio", default_value_t = 0.8)]
    pub split_ratio: f64,
    #[arg(long = "split-seed", default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long = "split-mode", value_enum, default_value_t = SplitModeArg::Image)]
    pub split_mode: SplitModeArg,
}

impl SplitArgs {
    pub fn index(&self, manifest: &Path) -> Result<DatasetIndex, CliError> {
        Ok(build_index(manifest, self.split_ratio, self.split_seed, self.split_mode.into())?)
    }
}

/// Model and optimisation flags shared by train and ablate.
#[derive(Clone, Debug, Args)]
pub struct TrainingArgs {
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    #[arg(long = "base-channels", default_value_t = 8)]
    pub base_channels: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long = "batch-size", default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub flips: bool,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub elastic: bool,
    /// Organelles whose training uses elastic deformation.
    #[arg(long = "elastic-organelles", value_delimiter = ',', default_value = "actin")]
    pub elastic_organelles: Vec<Organelle>,
    #[arg(long = "val-every", default_value_t = 50)]
    pub val_every: usize,
    #[arg(long = "val-images", default_value_t = 8)]
    pub val_images: usize,
    #[command(flatten)]
    pub split: SplitArgs,
}

impl TrainingArgs {
    pub fn model_config(&self, strategy: Strategy) -> ModelConfig {
        ModelConfig {
            levels: self.levels,
            base_channels: self.base_channels,
            strategy,
            seed: self.seed,
            ..ModelConfig::default()
        }
    }

    pub fn train_config(&self, patch: usize, stride: Option<usize>, mode: InputMode, weights: ObjectiveWeights) -> TrainConfig {
        TrainConfig {
            patch_size: patch,
            stride: stride.unwrap_or((patch / 2).max(1)),
            steps: self.steps,
            batch_size: self.batch_size,
            adam: AdamConfig { lr: self.lr, ..AdamConfig::default() },
            seed: self.seed,
            augment_flips: self.flips,
            augment_elastic: self.elastic,
            elastic_organelles: self.elastic_organelles.clone(),
            weights,
            input_mode: mode,
            val_every: self.val_every,
            val_images: self.val_images,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory receiving model.lmck and history.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = StrategyArg::Separate)]
    pub strategy: StrategyArg,
    /// Organelle trained by the separate strategy.
    #[arg(long, default_value = "nucleus")]
    pub organelle: Organelle,
    #[arg(long, default_value_t = 512)]
    pub patch: usize,
    /// Defaults to half the patch size.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Train on whole images resized to SIZE x SIZE instead of patches.
    #[arg(long, value_name = "SIZE")]
    pub resample: Option<usize>,
    /// alpha,beta,lambda,omega for MSE, 1-SSIM, 1-PCC and CD.
    #[arg(long, default_value = "1.0,0.2,0.1,0.1", value_parser = parse_floats::<4>)]
    pub weights: [f64; 4],
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input images (LMCI or PGM).
    #[arg(long, num_args = 1.., required_unless_present = "manifest", conflicts_with = "manifest")]
    pub input: Vec<PathBuf>,
    /// Predict every input listed in a manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Organelles to predict (default: every decoder in the checkpoint).
    #[arg(long, value_delimiter = ',')]
    pub organelle: Vec<Organelle>,
    #[arg(long, default_value_t = 512)]
    pub patch: usize,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Resize to SIZE x SIZE for a single forward pass instead of tiling.
    #[arg(long, value_name = "SIZE")]
    pub resample: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitSelect {
    All,
    Train,
    Validation,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory written by `predict --manifest`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Report CSV path (default: <predictions>/report.csv).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitSelect::All)]
    pub split: SplitSelect,
    #[command(flatten)]
    pub split_args: SplitArgs,
    /// Second prediction directory; paired per-image scores are compared
    /// with the Wilcoxon signed-rank test.
    #[arg(long)]
    pub compare: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Run a single check: mse, ssim, pcc, cd, combined or model.
    #[arg(long)]
    pub term: Option<Check>,
    /// Override every threshold.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Train(TrainError::Config(_)) => EXIT_CONFIG,
            CliError::Train(TrainError::Objective(_)) => EXIT_CONFIG,
            CliError::Train(TrainError::Model(crate::model::ModelError::BadConfig(_))) => EXIT_CONFIG,
            CliError::Train(TrainError::Model(crate::model::ModelError::Indivisible { .. })) => EXIT_CONFIG,
            CliError::Train(TrainError::Diverged { .. }) => EXIT_DIVERGED,
            CliError::Train(_) => EXIT_RUNTIME,
            CliError::Synth(SynthError::Config(_)) => EXIT_CONFIG,
            CliError::Synth(_) => EXIT_RUNTIME,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let values: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<Result<_, _>>()?;
    values.try_into().map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

pub fn weights_from(w: [f64; 4]) -> ObjectiveWeights {
    ObjectiveWeights { alpha: w[0], beta: w[1], lambda: w[2], omega: w[3] }
}

const SUBCOMMANDS: [&str; 6] = ["synth", "train", "predict", "evaluate", "gradcheck", "ablate"];

/// Turns config file text into `--key value` arguments.
pub fn config_args(text: &str) -> Result<Vec<OsString>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| format!("config line {}: expected `key = value`", i + 1))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key.starts_with('-') || key == "config" {
            return Err(format!("config line {}: invalid key {key:?}", i + 1));
        }
        out.push(OsString::from(format!("--{key}")));
        out.push(OsString::from(value));
    }
    Ok(out)
}

/// Splices config file arguments in front of the command-line flags of the
/// subcommand, so later (command-line) values override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut config = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            config = Some(args.get(i + 1).ok_or("--config needs a file")?.clone());
        } else if let Some(v) = s.strip_prefix("--config=") {
            config = Some(OsString::from(v));
        }
    }
    let Some(path) = config else { return Ok(args) };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {}: {e}", path.to_string_lossy()))?;
    let extra = config_args(&text)?;
    let Some(pos) = args.iter().position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref())) else {
        return Ok(args);
    };
    let mut out = args[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_CONFIG;
        }
        // Fails only if the pool was already built, e.g. by an earlier call
        // in the same process; the existing pool is kept then.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Ablate(a) => ablate::cmd_ablate(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn cmd_synth(a: &SynthArgs) -> Result<u8, CliError> {
    let cfg = SynthConfig {
        seed: a.seed,
        n_studies: a.studies,
        images_per_study: a.per_study,
        image_size: a.size,
        sparsity: a.sparsity,
        modality_mix: a.modality_mix,
    };
    let manifest = generate(&cfg, &a.out)?;
    println!("wrote {} records to {}", a.studies * a.per_study, manifest.display());
    Ok(EXIT_OK)
}

fn input_mode(resample: Option<usize>) -> InputMode {
    resample.map_or(InputMode::Patch, InputMode::Resample)
}

pub fn cmd_train(a: &TrainArgs) -> Result<u8, CliError> {
    let strategy = match a.strategy {
        StrategyArg::Separate => Strategy::Separate(a.organelle),
        StrategyArg::Shared => Strategy::Shared,
    };
    let model_cfg = a.training.model_config(strategy);
    let patch = a.resample.unwrap_or(a.patch);
    let cfg = a.training.train_config(patch, a.stride, input_mode(a.resample), weights_from(a.weights));
    model_cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate(&model_cfg)?;
    let index = a.training.split.index(&a.manifest)?;

    let every = (a.training.steps / 20).max(1);
    let outcome = train_with_progress(&index, &model_cfg, &cfg, |row| {
        if row.step == 1 || row.step % every == 0 {
            let val = row.validation.map(|v| format!("  val_ssim {:.4}  val_pcc {:.4}", v.ssim, v.pcc)).unwrap_or_default();
            println!("step {:>6}  loss {:.5}{val}", row.step, row.combined);
        }
    })?;
    fs::create_dir_all(&a.out).map_err(runtime)?;
    let checkpoint = a.out.join(CHECKPOINT_NAME);
    save_checkpoint(&outcome.model, &checkpoint).map_err(runtime)?;
    write_history(a.out.join(HISTORY_NAME), &outcome.history)?;
    println!("wrote {} and {}", checkpoint.display(), a.out.join(HISTORY_NAME).display());
    Ok(EXIT_OK)
}

/// Where `predict --manifest` stores the prediction of `organelle` for an
/// input: the input's path relative to the manifest directory, extension
/// dropped, suffixed with the organelle name.
pub fn prediction_path(out: &Path, manifest_dir: &Path, input: &Path, organelle: Organelle) -> PathBuf {
    let rel = input.strip_prefix(manifest_dir).unwrap_or(input);
    let stem = rel.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let parent = rel.parent().filter(|p| !p.has_root()).unwrap_or(Path::new(""));
    out.join(parent).join(format!("{stem}_{}.lmci", organelle.name()))
}

pub fn load_model(path: &Path) -> Result<Model, CliError> {
    load_checkpoint(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

pub fn predict_one(
    model: &Model,
    img: &Image2D,
    organelle: Organelle,
    patch: usize,
    stride: Option<usize>,
    resample: Option<usize>,
) -> Result<Image2D, CliError> {
    let pred = match resample {
        Some(size) => predict_resampled(model, img, organelle, size)?,
        None => predict_image(model, img, organelle, patch, stride.unwrap_or((patch / 2).max(1)))?,
    };
    Ok(pred)
}

pub fn cmd_predict(a: &PredictArgs) -> Result<u8, CliError> {
    let model = load_model(&a.checkpoint)?;
    let organelles = if a.organelle.is_empty() { model.organelles() } else { a.organelle.clone() };
    if let Some(o) = organelles.iter().find(|o| !model.organelles().contains(o)) {
        return Err(CliError::Config(format!("checkpoint has no {} decoder", o.name())));
    }
    let divisor = model.config().size_divisor();
    let side = a.resample.unwrap_or(a.patch);
    if side == 0 || side % divisor != 0 {
        return Err(CliError::Config(format!("patch/resample size {side} must be a positive multiple of {divisor}")));
    }
    if a.stride.is_some_and(|s| s == 0 || s > a.patch) {
        return Err(CliError::Config(format!("stride must be in 1..={}", a.patch)));
    }

    let (inputs, base): (Vec<PathBuf>, Option<PathBuf>) = match &a.manifest {
        Some(m) => {
            let records = read_manifest(m)?;
            let base = m.parent().unwrap_or(Path::new("")).to_path_buf();
            (records.into_iter().map(|r| r.input_path).collect(), Some(base))
        }
        None => (a.input.clone(), None),
    };
    let mut written = 0;
    for input in &inputs {
        let img = read_image(input).map_err(|e| runtime(format!("{}: {e}", input.display())))?;
        for &o in &organelles {
            let pred = predict_one(&model, &img, o, a.patch, a.stride, a.resample)?;
            let path = match &base {
                Some(base) => prediction_path(&a.out, base, input, o),
                None => prediction_path(&a.out, input.parent().unwrap_or(Path::new("")), input, o),
            };
            write_image(&path, &pred).map_err(runtime)?;
            written += 1;
        }
    }
    println!("wrote {written} predictions to {}", a.out.display());
    Ok(EXIT_OK)
}

fn selected_records(index: &DatasetIndex, split: SplitSelect) -> Vec<&SampleRecord> {
    match split {
        SplitSelect::All => index.records.iter().collect(),
        SplitSelect::Train => index.indices(Split::Train).into_iter().map(|i| &index.records[i]).collect(),
        SplitSelect::Validation => index.indices(Split::Validation).into_iter().map(|i| &index.records[i]).collect(),
    }
}

/// Scores every (record, organelle) pair for which a prediction exists in
/// `predictions`. Targets are min-max normalized like training targets;
/// predictions are used as written.
pub fn score_predictions(
    records: &[&SampleRecord],
    manifest_dir: &Path,
    predictions: &Path,
) -> Result<Vec<MetricRow>, CliError> {
    let ssim = SsimConfig::default();
    let mut rows = Vec::new();
    for r in records {
        for (&o, target_path) in &r.targets {
            let pred_path = prediction_path(predictions, manifest_dir, &r.input_path, o);
            if !pred_path.exists() {
                continue;
            }
            let pred = read_image(&pred_path).map_err(|e| runtime(format!("{}: {e}", pred_path.display())))?;
            let target = read_image(target_path).map_err(|e| runtime(format!("{}: {e}", target_path.display())))?;
            let id = r.input_path.strip_prefix(manifest_dir).unwrap_or(&r.input_path).display().to_string();
            rows.push(evaluate_pair(&pred, &normalize_min_max(&target), o, id, &ssim).map_err(runtime)?);
        }
    }
    Ok(rows)
}

/// Paired Wilcoxon p-values per (organelle, metric) for two row sets scored
/// on the same records. Pairs with fewer than the minimum count are skipped.
pub fn paired_tests(a: &[MetricRow], b: &[MetricRow]) -> BTreeMap<(Organelle, Metric), Result<f64, String>> {
    let key = |r: &MetricRow| (r.record.clone(), r.organelle);
    let b_by: BTreeMap<_, _> = b.iter().map(|r| (key(r), r)).collect();
    let mut pairs: BTreeMap<(Organelle, Metric), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ra in a {
        let Some(rb) = b_by.get(&key(ra)) else { continue };
        for (&m, &va) in &ra.values {
            if let Some(vb) = rb.get(m) {
                let e = pairs.entry((ra.organelle, m)).or_default();
                e.0.push(va);
                e.1.push(vb);
            }
        }
    }
    pairs.into_iter().map(|(k, (x, y))| (k, wilcoxon_signed_rank(&x, &y).map_err(|e| e.to_string()))).collect()
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<u8, CliError> {
    let index = a.split_args.index(&a.manifest)?;
    let manifest_dir = a.manifest.parent().unwrap_or(Path::new("")).to_path_buf();
    let records = selected_records(&index, a.split);
    let rows = score_predictions(&records, &manifest_dir, &a.predictions)?;
    if rows.is_empty() {
        return Err(CliError::Runtime(format!("no predictions found under {}", a.predictions.display())));
    }
    let report = aggregate(&rows).map_err(runtime)?;
    let mut table_rows = vec![(a.predictions.display().to_string(), report.clone())];
    let mut compare_rows = None;
    if let Some(other) = &a.compare {
        let rows_b = score_predictions(&records, &manifest_dir, other)?;
        if !rows_b.is_empty() {
            table_rows.push((other.display().to_string(), aggregate(&rows_b).map_err(runtime)?));
        }
        compare_rows = Some(rows_b);
    }
    print!("{}", format_table(&format!("Evaluation ({} pairs)", rows.len()), &table_rows));
    if let Some(rows_b) = compare_rows {
        println!("\nWilcoxon signed-rank, two-sided:");
        for ((o, m), p) in paired_tests(&rows, &rows_b) {
            match p {
                Ok(p) => println!("  {:<13} {:<4} p = {p:.5}{}", o.name(), m.name(), if p < 0.01 { "  (< 0.01)" } else { "" }),
                Err(e) => println!("  {:<13} {:<4} {e}", o.name(), m.name()),
            }
        }
    }
    let path = a.report.clone().unwrap_or_else(|| a.predictions.join(REPORT_NAME));
    write_report(&path, &report)?;
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn write_report(path: &Path, report: &Report) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(runtime)?;
    }
    fs::write(path, report.to_csv()).map_err(runtime)
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<u8, CliError> {
    if a.tol.is_some_and(|t| !(t > 0.0)) {
        return Err(CliError::Config("--tol must be positive".into()));
    }
    let checks: Vec<Check> = match a.term {
        Some(c) => vec![c],
        None => Check::DEFAULT.to_vec(),
    };
    let mut table = format!("{:<9} {:>14} {:>10}  status\n", "check", "max rel err", "threshold");
    let mut all_ok = true;
    for c in checks {
        let r = run_check(c, a.seed, a.tol).map_err(runtime)?;
        all_ok &= r.passed();
        let _ = writeln!(
            table,
            "{:<9} {:>14.3e} {:>10.1e}  {}",
            c.name(),
            r.max_relative_error,
            r.tolerance,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
    print!("{table}");
    let _ = std::io::stdout().flush();
    Ok(if all_ok { EXIT_OK } else { EXIT_RUNTIME })
}
