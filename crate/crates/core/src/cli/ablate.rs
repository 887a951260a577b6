//! Ablation harness: trains variants along the strategy, patch-size and
//! objective axes and reports validation metrics in one table per axis.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use super::{predict_one, runtime, CliError, TrainingArgs, EXIT_OK};
use crate::image::{normalize_min_max, Organelle};
use crate::imageio::read_image;
use crate::metrics::{aggregate, evaluate_pair, format_table, Metric, MetricRow, Report};
use crate::model::{Model, Strategy};
use crate::objective::{ObjectiveWeights, SsimConfig};
use crate::trainer::{train, DatasetIndex, InputMode, Split, TrainError};

pub const REPORT_HEADER: &str = "\
Desk-scale ablation on the given dataset with the micro encoder-decoder.
The architecture axis is not run: only this one architecture is available.
Row ordering here is not expected to match results obtained at full scale.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Axis {
    Strategy,
    Patch,
    Objective,
}

impl Axis {
    fn title(self) -> &'static str {
        match self {
            Axis::Strategy => "Training strategy",
            Axis::Patch => "Patch size",
            Axis::Objective => "Objective function",
        }
    }

    fn name(self) -> &'static str {
        match self {
            Axis::Strategy => "strategy",
            Axis::Patch => "patch",
            Axis::Objective => "objective",
        }
    }
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory receiving ablation.txt and ablation.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "strategy,patch,objective")]
    pub axes: Vec<Axis>,
    /// Organelles to train and score.
    #[arg(long, value_delimiter = ',', default_value = "nucleus,mitochondria,tubulin,actin")]
    pub organelles: Vec<Organelle>,
    /// Patch sizes of the patch axis.
    #[arg(long, value_delimiter = ',', default_value = "512,256,128")]
    pub patches: Vec<usize>,
    /// Patch size used on the strategy and objective axes.
    #[arg(long = "base-patch", default_value_t = 512)]
    pub base_patch: usize,
    /// Side length of the resampling baseline on the patch axis.
    #[arg(long = "resample-size", default_value_t = 1024)]
    pub resample_size: usize,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
struct Variant {
    shared: bool,
    /// Patch side, or resample side when `resample` is set.
    side: usize,
    resample: bool,
    weights: [f64; 4],
}

impl Variant {
    fn key(&self) -> (bool, usize, bool, [u64; 4]) {
        (self.shared, self.side, self.resample, self.weights.map(f64::to_bits))
    }
}

const COMBINED: [f64; 4] = [1.0, 0.2, 0.1, 0.1];
const MSE: [f64; 4] = [1.0, 0.0, 0.0, 0.0];
const SSIM: [f64; 4] = [0.0, 1.0, 0.0, 0.0];
const PCC: [f64; 4] = [0.0, 0.0, 1.0, 0.0];

fn rows_for(axis: Axis, a: &AblateArgs) -> Vec<(String, Variant)> {
    let base = Variant { shared: false, side: a.base_patch, resample: false, weights: COMBINED };
    match axis {
        Axis::Strategy => vec![
            ("Separate-Encoder".into(), base),
            ("Shared-Encoder".into(), Variant { shared: true, ..base }),
        ],
        Axis::Patch => {
            let mut rows: Vec<(String, Variant)> =
                a.patches.iter().map(|&p| (format!("{p}x{p}"), Variant { side: p, ..base })).collect();
            let s = a.resample_size;
            rows.push((format!("Resampling ({s}x{s})"), Variant { side: s, resample: true, ..base }));
            rows
        }
        Axis::Objective => vec![
            ("Combined Objective".into(), base),
            ("MSE".into(), Variant { weights: MSE, ..base }),
            ("SSIM".into(), Variant { weights: SSIM, ..base }),
            ("PCC".into(), Variant { weights: PCC, ..base }),
        ],
    }
}

/// Trained variants are cached so rows shared between axes train once.
struct Runner<'a> {
    args: &'a AblateArgs,
    index: DatasetIndex,
    manifest_dir: PathBuf,
    cache: BTreeMap<(bool, usize, bool, [u64; 4]), Vec<MetricRow>>,
    log: String,
}

impl Runner<'_> {
    fn scores(&mut self, v: Variant) -> Result<Vec<MetricRow>, CliError> {
        if let Some(rows) = self.cache.get(&v.key()) {
            return Ok(rows.clone());
        }
        let weights = ObjectiveWeights { alpha: v.weights[0], beta: v.weights[1], lambda: v.weights[2], omega: v.weights[3] };
        let mode = if v.resample { InputMode::Resample(v.side) } else { InputMode::Patch };
        let cfg = self.args.training.train_config(v.side, None, mode, weights);
        let mut models: Vec<(Model, Vec<Organelle>)> = Vec::new();
        if v.shared {
            let outcome = train(&self.index, &self.args.training.model_config(Strategy::Shared), &cfg)?;
            models.push((outcome.model, self.args.organelles.clone()));
        } else {
            for &o in &self.args.organelles {
                match train(&self.index, &self.args.training.model_config(Strategy::Separate(o)), &cfg) {
                    Ok(outcome) => models.push((outcome.model, vec![o])),
                    Err(TrainError::EmptySplit) => {
                        let _ = writeln!(self.log, "no training images for {}; its cells stay empty", o.name());
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }

        let ssim = SsimConfig::default();
        let mut rows = Vec::new();
        for i in self.index.indices(Split::Validation) {
            let record = &self.index.records[i];
            let input = read_image(&record.input_path).map_err(runtime)?;
            for (model, organelles) in &models {
                for &o in organelles {
                    let Some(target_path) = record.targets.get(&o) else { continue };
                    let target = normalize_min_max(&read_image(target_path).map_err(runtime)?);
                    let resample = v.resample.then_some(v.side);
                    let pred = predict_one(model, &input, o, v.side, None, resample)?;
                    let id = record.input_path.strip_prefix(&self.manifest_dir).unwrap_or(&record.input_path);
                    rows.push(evaluate_pair(&pred, &target, o, id.display().to_string(), &ssim).map_err(runtime)?);
                }
            }
        }
        self.cache.insert(v.key(), rows.clone());
        Ok(rows)
    }
}

/// CSV with one line per (axis, row, organelle, metric).
pub fn ablation_csv(tables: &[(Axis, Vec<(String, Report)>)]) -> String {
    let mut out = String::from("axis,row,organelle,metric,mean,n\n");
    for (axis, rows) in tables {
        for (label, report) in rows {
            for o in Organelle::ALL {
                for &m in Metric::for_organelle(o) {
                    if let Some(e) = report.entries.get(&(o, m)) {
                        let _ = writeln!(out, "{},{label},{},{},{},{}", axis.name(), o.name(), m.name(), e.mean, e.n);
                    }
                }
            }
        }
    }
    out
}

pub fn cmd_ablate(a: &AblateArgs) -> Result<u8, CliError> {
    if a.organelles.is_empty() || a.axes.is_empty() {
        return Err(CliError::Config("need at least one organelle and one axis".into()));
    }
    let divisor = a.training.model_config(Strategy::Shared).size_divisor();
    for &side in a.patches.iter().chain([&a.base_patch, &a.resample_size]) {
        if side < SsimConfig::default().window_size || side % divisor != 0 {
            return Err(CliError::Config(format!("size {side} must be a multiple of {divisor} and at least 11")));
        }
    }
    let index = a.training.split.index(&a.manifest)?;
    if index.indices(Split::Validation).is_empty() {
        return Err(CliError::Config("validation split is empty".into()));
    }
    let mut runner = Runner {
        args: a,
        index,
        manifest_dir: a.manifest.parent().unwrap_or(Path::new("")).to_path_buf(),
        cache: BTreeMap::new(),
        log: String::new(),
    };

    let mut axes = a.axes.clone();
    axes.sort();
    axes.dedup();
    let mut text = format!("{REPORT_HEADER}\n");
    let mut tables = Vec::new();
    for axis in axes {
        let mut table_rows = Vec::new();
        for (label, variant) in rows_for(axis, a) {
            println!("[{}] {label}", axis.name());
            let rows = runner.scores(variant)?;
            let report = if rows.is_empty() { Report::default() } else { aggregate(&rows).map_err(runtime)? };
            table_rows.push((label, report));
        }
        let _ = write!(text, "\n{}", format_table(axis.title(), &table_rows));
        tables.push((axis, table_rows));
    }
    if !runner.log.is_empty() {
        let _ = write!(text, "\n{}", runner.log);
    }
    print!("\n{text}");
    fs::create_dir_all(&a.out).map_err(runtime)?;
    fs::write(a.out.join("ablation.txt"), &text).map_err(runtime)?;
    fs::write(a.out.join("ablation.csv"), ablation_csv(&tables)).map_err(runtime)?;
    println!("wrote {}", a.out.join("ablation.txt").display());
    Ok(EXIT_OK)
}
