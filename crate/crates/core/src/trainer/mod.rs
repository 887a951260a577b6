//! Training and whole-image prediction.
//!
//! A step draws a record with the study-balanced sampler, cuts a random patch
//! (or resamples the whole image), applies the same spatial augmentation to
//! input and targets, runs the model, evaluates the combined objective for
//! every annotated organelle the model has a decoder for, backpropagates and
//! takes one Adam step.

pub mod dataset;
pub mod manifest;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::image::{elastic_transform, flip, normalize_min_max, resize_bilinear, FlipAxis, Image2D, Organelle};
use crate::imageio::{read_image, ImageIoError};
use crate::model::{adam_step, AdamConfig, AdamState, Model, ModelConfig, ModelError, Strategy};
use crate::objective::{combined, pcc, ssim, ObjectiveError, ObjectiveWeights, SsimConfig};
use crate::patcher::{hann_window, tiled_map, PatchError, DEFAULT_WINDOW_FLOOR};

pub use dataset::{build_index, study_balanced_sample, DatasetIndex, Split, SplitMode, StudySampler};
pub use manifest::{format_manifest, parse_manifest, read_manifest, SampleRecord, MANIFEST_HEADER};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: String,
        #[source]
        source: ImageIoError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error("no training records available")]
    EmptySplit,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("loss became non-finite at step {step}")]
    Diverged { step: usize },
}

impl TrainError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        TrainError::Io { path: path.display().to_string(), source }
    }
}

/// How a training sample (and an inference input) is cut from the image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputMode {
    /// Random `patch_size` crops for training; tiled blending at inference.
    Patch,
    /// Whole image bilinearly resized to `size x size`, one forward pass.
    Resample(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub patch_size: usize,
    pub stride: usize,
    pub steps: usize,
    /// Samples whose gradients are averaged per optimizer step.
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub augment_flips: bool,
    pub augment_elastic: bool,
    /// Elastic deformation is only applied when one of these is being trained.
    pub elastic_organelles: Vec<Organelle>,
    pub elastic_spacing: usize,
    pub elastic_magnitude: f64,
    pub weights: ObjectiveWeights,
    pub ssim: SsimConfig,
    pub input_mode: InputMode,
    pub val_every: usize,
    pub val_images: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            patch_size: 512,
            stride: 256,
            steps: 1000,
            batch_size: 1,
            adam: AdamConfig::default(),
            seed: 0,
            augment_flips: true,
            augment_elastic: true,
            elastic_organelles: vec![Organelle::Actin],
            elastic_spacing: 32,
            elastic_magnitude: 4.0,
            weights: ObjectiveWeights::default(),
            ssim: SsimConfig::default(),
            input_mode: InputMode::Patch,
            val_every: 50,
            val_images: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.steps < 1 {
            return bad("steps must be at least 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch size must be at least 1".into());
        }
        let divisor = model.size_divisor();
        let side = match self.input_mode {
            InputMode::Patch => self.patch_size,
            InputMode::Resample(size) => size,
        };
        if side < self.ssim.window_size || side % divisor != 0 {
            return bad(format!(
                "input side {side} must be a multiple of {divisor} and at least the SSIM window"
            ));
        }
        if self.stride < 1 || self.stride > self.patch_size {
            return bad(format!("stride {} must be in 1..={}", self.stride, self.patch_size));
        }
        if !(self.adam.lr > 0.0) {
            return bad("learning rate must be positive".into());
        }
        if self.augment_elastic && self.elastic_spacing < 4 {
            return bad("elastic spacing must be at least 4".into());
        }
        self.weights.validate()?;
        self.ssim.validate()?;
        Ok(())
    }
}

/// Loads images once and keeps the min-max normalized copy.
#[derive(Default)]
pub struct ImageCache {
    images: HashMap<PathBuf, Arc<Image2D>>,
}

impl ImageCache {
    pub fn load(&mut self, path: &Path) -> Result<Arc<Image2D>, TrainError> {
        if let Some(img) = self.images.get(path) {
            return Ok(Arc::clone(img));
        }
        let img = read_image(path)
            .map_err(|source| TrainError::Image { path: path.display().to_string(), source })?;
        let img = Arc::new(normalize_min_max(&img));
        self.images.insert(path.to_path_buf(), Arc::clone(&img));
        Ok(img)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub input: Image2D,
    pub targets: BTreeMap<Organelle, Image2D>,
}

impl TrainingExample {
    /// Organelles that contribute to the loss for this example.
    pub fn mask(&self) -> Vec<Organelle> {
        self.targets.keys().copied().collect()
    }
}

/// Cuts one augmented training example from `record`. Only targets listed in
/// `organelles` and present in the record are kept; every spatial transform
/// is applied identically to the input and each kept target.
pub fn make_training_example<R: Rng + ?Sized>(
    record: &SampleRecord,
    organelles: &[Organelle],
    cfg: &TrainConfig,
    rng: &mut R,
    cache: &mut ImageCache,
) -> Result<TrainingExample, TrainError> {
    let input = cache.load(&record.input_path)?;
    let mut targets = BTreeMap::new();
    for (&o, path) in &record.targets {
        if organelles.contains(&o) {
            let t = cache.load(path)?;
            if t.dims() != input.dims() {
                return Err(TrainError::Config(format!(
                    "{} is {:?} but input is {:?}",
                    path.display(),
                    t.dims(),
                    input.dims()
                )));
            }
            targets.insert(o, t);
        }
    }

    let cut: Box<dyn Fn(&Image2D) -> Image2D> = match cfg.input_mode {
        InputMode::Patch => {
            let p = cfg.patch_size;
            let padded_dims = (input.height().max(p), input.width().max(p));
            let row = rng.random_range(0..=padded_dims.0 - p);
            let col = rng.random_range(0..=padded_dims.1 - p);
            Box::new(move |img: &Image2D| {
                img.reflect_pad_to(p, p).crop(row, col, p, p).expect("anchor inside padded image")
            })
        }
        InputMode::Resample(size) => Box::new(move |img: &Image2D| resize_bilinear(img, size, size)),
    };
    let mut input = cut(&input);
    let mut targets: BTreeMap<Organelle, Image2D> = targets.into_iter().map(|(o, t)| (o, cut(&t))).collect();

    let wants_elastic = cfg.augment_elastic
        && cfg.elastic_magnitude > 0.0
        && targets.keys().any(|o| cfg.elastic_organelles.contains(o));
    let mut apply = |f: &dyn Fn(&Image2D) -> Result<Image2D, TrainError>| -> Result<(), TrainError> {
        input = f(&input)?;
        for t in targets.values_mut() {
            *t = f(t)?;
        }
        Ok(())
    };
    if cfg.augment_flips {
        if rng.random_bool(0.5) {
            apply(&|img| Ok(flip(img, FlipAxis::Horizontal)))?;
        }
        if rng.random_bool(0.5) {
            apply(&|img| Ok(flip(img, FlipAxis::Vertical)))?;
        }
    }
    if wants_elastic {
        let seed: u64 = rng.random();
        let (spacing, magnitude) = (cfg.elastic_spacing, cfg.elastic_magnitude);
        apply(&|img| {
            elastic_transform(img, seed, spacing, magnitude).map_err(|e| TrainError::Config(e.to_string()))
        })?;
    }
    Ok(TrainingExample { input, targets })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub step: usize,
    pub mse: f64,
    /// 1 - SSIM
    pub ssim_term: f64,
    /// 1 - PCC
    pub pcc_term: f64,
    pub cd_term: f64,
    pub combined: f64,
    pub validation: Option<ValidationScore>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationScore {
    pub ssim: f64,
    pub pcc: f64,
}

pub const HISTORY_HEADER: &str = "step,mse,ssim_term,pcc_term,cd_term,combined,val_ssim,val_pcc";

pub fn format_history(rows: &[HistoryRow]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{},{},{},{},", r.step, r.mse, r.ssim_term, r.pcc_term, r.cd_term, r.combined);
        if let Some(v) = r.validation {
            let _ = write!(out, "{},{}", v.ssim, v.pcc);
        } else {
            out.push(',');
        }
        out.push('\n');
    }
    out
}

pub fn write_history(path: impl AsRef<Path>, rows: &[HistoryRow]) -> Result<(), TrainError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| TrainError::io(parent, e))?;
    }
    fs::write(path, format_history(rows)).map_err(|e| TrainError::io(path, e))
}

pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<HistoryRow>,
}

/// Per-term loss sums for one optimizer step.
#[derive(Default)]
struct StepTotals {
    mse: f64,
    ssim_term: f64,
    pcc_term: f64,
    cd_term: f64,
    combined: f64,
}

/// Loss and gradients for one example. Returns `None` when the example has no
/// target the model can learn from.
pub fn example_gradients(
    model: &Model,
    example: &TrainingExample,
    weights: &ObjectiveWeights,
    ssim_cfg: &SsimConfig,
) -> Result<Option<(crate::model::ParamGrads, [f64; 5])>, TrainError> {
    let organelles = example.mask();
    if organelles.is_empty() {
        return Ok(None);
    }
    let input = example.input.to_f64();
    let (preds, cache) = model.forward_heads(&input, &organelles)?;
    let mut grads_out = Vec::with_capacity(preds.len());
    let mut totals = [0.0; 5];
    for (pred, o) in preds.iter().zip(&organelles) {
        let target = example.targets[o].to_f64();
        let report = combined(pred, &target, weights, ssim_cfg)?;
        totals[0] += report.mse;
        totals[1] += 1.0 - report.ssim;
        totals[2] += 1.0 - report.pcc;
        totals[3] += report.cd;
        totals[4] += report.combined;
        grads_out.push(report.grad);
    }
    Ok(Some((model.backward(cache, &grads_out)?, totals)))
}

/// Trains a fresh model. Fully deterministic given the two configs and the
/// dataset contents.
pub fn train(
    index: &DatasetIndex,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_with_progress(index, model_cfg, cfg, |_| {})
}

pub fn train_with_progress(
    index: &DatasetIndex,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&HistoryRow),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate(model_cfg)?;
    let mut model = Model::new(model_cfg.clone())?;
    let organelles = model.organelles();
    let filter = match model_cfg.strategy {
        Strategy::Separate(o) => Some(o),
        Strategy::Shared => None,
    };
    let sampler = StudySampler::new(index, filter)?;
    let validation = validation_subset(index, &organelles, cfg.val_images);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cache = ImageCache::default();
    let mut adam = AdamState::new(model.params());
    let mut history = Vec::with_capacity(cfg.steps);

    for step in 1..=cfg.steps {
        let mut grads = model.params().zeros_like();
        let mut totals = StepTotals::default();
        let scale = 1.0 / cfg.batch_size as f64;
        for _ in 0..cfg.batch_size {
            let record = &index.records[sampler.sample(&mut rng)];
            let example = make_training_example(record, &organelles, cfg, &mut rng, &mut cache)?;
            let Some((g, t)) = example_gradients(&model, &example, &cfg.weights, &cfg.ssim)? else {
                continue;
            };
            grads.add_scaled(&g, scale)?;
            totals.mse += scale * t[0];
            totals.ssim_term += scale * t[1];
            totals.pcc_term += scale * t[2];
            totals.cd_term += scale * t[3];
            totals.combined += scale * t[4];
        }
        if !totals.combined.is_finite() || !grads.all_finite() {
            return Err(TrainError::Diverged { step });
        }
        adam_step(model.params_mut(), &grads, &mut adam, &cfg.adam)?;
        model.params_mut().round_to_f32();
        if !model.params().all_finite() {
            return Err(TrainError::Diverged { step });
        }

        let validate = !validation.is_empty() && (step % cfg.val_every.max(1) == 0 || step == cfg.steps);
        let validation_score = if validate {
            Some(validation_score(&model, index, &validation, cfg, &mut cache)?)
        } else {
            None
        };
        let row = HistoryRow {
            step,
            mse: totals.mse,
            ssim_term: totals.ssim_term,
            pcc_term: totals.pcc_term,
            cd_term: totals.cd_term,
            combined: totals.combined,
            validation: validation_score,
        };
        progress(&row);
        history.push(row);
    }
    Ok(TrainOutcome { model, history })
}

/// First `limit` validation records (manifest order) annotated for at least one
/// of `organelles`.
pub fn validation_subset(index: &DatasetIndex, organelles: &[Organelle], limit: usize) -> Vec<usize> {
    index
        .indices(Split::Validation)
        .into_iter()
        .filter(|&i| organelles.iter().any(|&o| index.records[i].has(o)))
        .take(limit)
        .collect()
}

fn validation_score(
    model: &Model,
    index: &DatasetIndex,
    subset: &[usize],
    cfg: &TrainConfig,
    cache: &mut ImageCache,
) -> Result<ValidationScore, TrainError> {
    let (mut s, mut p, mut n) = (0.0, 0.0, 0usize);
    for &i in subset {
        let record = &index.records[i];
        let input = cache.load(&record.input_path)?;
        for o in model.organelles() {
            let Some(path) = record.targets.get(&o) else { continue };
            let target = cache.load(path)?.to_f64();
            let pred = predict_normalized(model, &input, o, cfg.input_mode, cfg.patch_size, cfg.stride)?.to_f64();
            s += ssim(&pred, &target, &cfg.ssim)?.value;
            p += pcc(&pred, &target)?.value;
            n += 1;
        }
    }
    let n = n.max(1) as f64;
    Ok(ValidationScore { ssim: s / n, pcc: p / n })
}

/// Full-image prediction: min-max normalize, tile into overlapping patches,
/// predict each and blend with a Hann window. The blended output is returned
/// as is.
pub fn predict_image(
    model: &Model,
    img: &Image2D,
    organelle: Organelle,
    patch_size: usize,
    stride: usize,
) -> Result<Image2D, TrainError> {
    predict_normalized(model, &normalize_min_max(img), organelle, InputMode::Patch, patch_size, stride)
}

/// Resize to `size x size`, one forward pass, resize back.
pub fn predict_resampled(model: &Model, img: &Image2D, organelle: Organelle, size: usize) -> Result<Image2D, TrainError> {
    predict_normalized(model, &normalize_min_max(img), organelle, InputMode::Resample(size), size, size)
}

fn predict_normalized(
    model: &Model,
    img: &Image2D,
    organelle: Organelle,
    mode: InputMode,
    patch_size: usize,
    stride: usize,
) -> Result<Image2D, TrainError> {
    match mode {
        InputMode::Patch => {
            let window = hann_window(patch_size, DEFAULT_WINDOW_FLOOR)?;
            tiled_map(img, patch_size, stride, &window, |patch| {
                model.predict(patch, organelle).map_err(TrainError::from)
            })
        }
        InputMode::Resample(size) => {
            let small = resize_bilinear(img, size, size);
            let pred = model.predict(&small, organelle)?;
            Ok(resize_bilinear(&pred, img.height(), img.width()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{Modality, SampleMeta};
    use crate::imageio::write_image;

    fn ramp(h: usize, w: usize, phase: f32) -> Image2D {
        Image2D::from_fn(h, w, |r, c| ((r as f32 * 0.37 + c as f32 * 0.11 + phase).sin() + 1.0) * 0.5)
    }

    /// Writes `n` records where each target is a copy of the input.
    fn identity_dataset(dir: &Path, n: usize, organelles: &[Organelle]) -> DatasetIndex {
        let mut records = Vec::new();
        for i in 0..n {
            let img = ramp(40, 40, i as f32);
            let input_path = dir.join(format!("in{i}.lmci"));
            write_image(&input_path, &img).unwrap();
            let mut targets = BTreeMap::new();
            for &o in organelles {
                let p = dir.join(format!("{}{i}.lmci", o.name()));
                write_image(&p, &img).unwrap();
                targets.insert(o, p);
            }
            records.push(SampleRecord {
                input_path,
                meta: SampleMeta { study_id: format!("s{}", i % 2), modality: Modality::BrightField },
                targets,
            });
        }
        DatasetIndex::from_records(records, 0.8, 1, SplitMode::Image).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            patch_size: 16,
            stride: 8,
            steps: 3,
            ssim: SsimConfig::new(7, 1.5, 1.0),
            val_every: 2,
            val_images: 2,
            elastic_spacing: 8,
            elastic_organelles: Organelle::ALL.to_vec(),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn augmentation_is_shared_between_input_and_targets() {
        let dir = tempfile::tempdir().unwrap();
        let idx = identity_dataset(dir.path(), 3, &[Organelle::Nucleus, Organelle::Actin]);
        let cfg = small_cfg();
        let mut cache = ImageCache::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let ex = make_training_example(&idx.records[0], &Organelle::ALL, &cfg, &mut rng, &mut cache).unwrap();
            assert_eq!(ex.input.dims(), (16, 16));
            assert_eq!(ex.mask(), vec![Organelle::Nucleus, Organelle::Actin]);
            for t in ex.targets.values() {
                assert_eq!(t, &ex.input);
            }
        }
    }

    #[test]
    fn without_augmentation_patches_are_plain_crops() {
        let dir = tempfile::tempdir().unwrap();
        let idx = identity_dataset(dir.path(), 1, &[Organelle::Nucleus]);
        let cfg = TrainConfig { augment_flips: false, augment_elastic: false, ..small_cfg() };
        let raw = crate::image::normalize_min_max(&ramp(40, 40, 0.0));
        let mut cache = ImageCache::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let ex = make_training_example(&idx.records[0], &[Organelle::Nucleus], &cfg, &mut rng, &mut cache).unwrap();
            let found = (0..=24).any(|r| (0..=24).any(|c| raw.crop(r, c, 16, 16).unwrap() == ex.input));
            assert!(found, "patch is not a crop of the normalized image");
        }
    }

    #[test]
    fn only_requested_organelles_are_kept() {
        let dir = tempfile::tempdir().unwrap();
        let idx = identity_dataset(dir.path(), 2, &[Organelle::Nucleus, Organelle::Tubulin]);
        let mut cache = ImageCache::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ex =
            make_training_example(&idx.records[0], &[Organelle::Tubulin], &small_cfg(), &mut rng, &mut cache).unwrap();
        assert_eq!(ex.mask(), vec![Organelle::Tubulin]);
    }

    #[test]
    fn small_images_are_padded_to_patch() {
        let dir = tempfile::tempdir().unwrap();
        let idx = identity_dataset(dir.path(), 1, &[Organelle::Nucleus]);
        let cfg = TrainConfig { patch_size: 64, ..small_cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ex = make_training_example(&idx.records[0], &[Organelle::Nucleus], &cfg, &mut rng, &mut ImageCache::default())
            .unwrap();
        assert_eq!(ex.input.dims(), (64, 64));
    }

    #[test]
    fn training_is_deterministic_and_logs_every_step() {
        let dir = tempfile::tempdir().unwrap();
        let idx = identity_dataset(dir.path(), 5, &[Organelle::Nucleus]);
        let mcfg = ModelConfig { levels: 2, base_channels: 2, ..ModelConfig::default() };
        let a = train(&idx, &mcfg, &small_cfg()).unwrap();
        let b = train(&idx, &mcfg, &small_cfg()).unwrap();
        assert_eq!(a.model.params(), b.model.params());
        assert_eq!(format_history(&a.history), format_history(&b.history));
        assert_eq!(a.history.len(), 3);
        assert!(a.history[0].validation.is_none());
        assert!(a.history[1].validation.is_some());
        assert!(a.history[2].validation.is_some());
        let text = format_history(&a.history);
        assert!(text.starts_with(HISTORY_HEADER));
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 8);
    }

    #[test]
    fn shared_training_leaves_unannotated_decoders_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let idx = identity_dataset(dir.path(), 4, &[Organelle::Nucleus]);
        let mcfg = ModelConfig { levels: 2, base_channels: 2, strategy: Strategy::Shared, ..ModelConfig::default() };
        let before = Model::new(mcfg.clone()).unwrap();
        let after = train(&idx, &mcfg, &small_cfg()).unwrap().model;
        for ((name, t0), (_, t1)) in before.params().entries().iter().zip(after.params().entries()) {
            if name.starts_with("dec.") && !name.starts_with("dec.nucleus") {
                assert_eq!(t0, t1, "{name} moved");
            }
        }
        let nucleus_moved = before
            .params()
            .entries()
            .iter()
            .zip(after.params().entries())
            .any(|((n, a), (_, b))| n.starts_with("dec.nucleus") && a != b);
        assert!(nucleus_moved);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mcfg = ModelConfig::default();
        for cfg in [
            TrainConfig { steps: 0, ..TrainConfig::default() },
            TrainConfig { patch_size: 100, ..TrainConfig::default() },
            TrainConfig { stride: 0, ..TrainConfig::default() },
            TrainConfig { stride: 600, ..TrainConfig::default() },
            TrainConfig { input_mode: InputMode::Resample(4), ..TrainConfig::default() },
        ] {
            assert!(matches!(cfg.validate(&mcfg), Err(TrainError::Config(_))), "{cfg:?}");
        }
        TrainConfig::default().validate(&mcfg).unwrap();
    }

    #[test]
    fn tiled_prediction_matches_single_pass_when_patch_covers_image() {
        let model = Model::new(ModelConfig { levels: 2, base_channels: 2, ..ModelConfig::default() }).unwrap();
        let img = ramp(16, 16, 0.3);
        let tiled = predict_image(&model, &img, Organelle::Nucleus, 16, 8).unwrap();
        let direct = model.predict(&normalize_min_max(&img), Organelle::Nucleus).unwrap();
        for (a, b) in tiled.data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        let resampled = predict_resampled(&model, &ramp(20, 24, 0.0), Organelle::Nucleus, 16).unwrap();
        assert_eq!(resampled.dims(), (20, 24));
    }
}
