//! Procedural multi-study datasets.
//!
//! Each image holds a few elliptical cells. The four targets are drawn from
//! the same cell geometry: nuclei are smooth blobs at the cell cores,
//! mitochondria are small granules in the cytoplasm, tubulin is a set of
//! radial filaments and actin is a band along the cell boundary. The
//! transmitted-light input is a modality-specific rendering of a structure
//! field built from those layers, plus Gaussian noise. Targets carry a small
//! background offset and their own, weaker noise.
//!
//! Every record uses its own RNG stream derived from `(seed, study, index)`,
//! so generation order and thread count do not affect the output.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::image::{gaussian_blur, Image2D, Modality, Organelle, SampleMeta};
use crate::imageio::{write_image, ImageIoError};
use crate::trainer::{format_manifest, SampleRecord};

pub const MANIFEST_NAME: &str = "manifest.tsv";
pub const MIN_IMAGE_SIZE: usize = 128;
pub const NOISE_SIGMA: f64 = 0.02;
/// Offset and noise of the fluorescence targets, so backgrounds are not
/// exactly zero.
pub const TARGET_BACKGROUND: f64 = 0.05;
pub const TARGET_NOISE_SIGMA: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Image(#[from] ImageIoError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_studies: usize,
    pub images_per_study: usize,
    pub image_size: usize,
    /// Probability that each organelle is annotated, indexed by `Organelle::index`.
    pub sparsity: [f64; 4],
    /// Relative weights of BF, PC and DIC inputs.
    pub modality_mix: [f64; 3],
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_studies: 3,
            images_per_study: 10,
            image_size: 256,
            sparsity: [1.0, 0.8, 0.3, 0.15],
            modality_mix: [1.0, 1.0, 1.0],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.n_studies == 0 || self.images_per_study == 0 {
            return bad("need at least one study and one image per study".into());
        }
        if self.n_studies > u32::MAX as usize || self.images_per_study >= u32::MAX as usize {
            return bad("too many studies or images".into());
        }
        if self.image_size < MIN_IMAGE_SIZE {
            return bad(format!("image size {} is below {MIN_IMAGE_SIZE}", self.image_size));
        }
        if let Some(p) = self.sparsity.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("presence probability {p} outside [0, 1]"));
        }
        if self.sparsity.iter().all(|&p| p == 0.0) {
            return bad("at least one organelle needs a nonzero presence probability".into());
        }
        if self.modality_mix.iter().any(|w| !w.is_finite() || *w < 0.0) || self.modality_mix.iter().sum::<f64>() <= 0.0 {
            return bad("modality weights must be nonnegative with a positive sum".into());
        }
        Ok(())
    }
}

pub fn study_id(study: usize) -> String {
    format!("study{study:02}")
}

fn record_rng(seed: u64, study: usize, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((study as u64) << 32) | index);
    rng
}

/// Appearance shared by all images of one study.
#[derive(Clone, Copy, Debug)]
struct StudyStyle {
    cells_per_tile: f64,
    cell_radius: f64,
    granule_sigma: f64,
    contrast: f64,
}

fn study_style(seed: u64, study: usize) -> StudyStyle {
    let mut rng = record_rng(seed, study, u32::MAX as u64);
    StudyStyle {
        cells_per_tile: rng.random_range(1.6..2.6),
        cell_radius: rng.random_range(13.0..20.0),
        granule_sigma: rng.random_range(0.9..1.6),
        contrast: rng.random_range(0.8..1.2),
    }
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    angle: f64,
}

impl Cell {
    /// Elliptical radius: 1 on the boundary, 0 at the center.
    fn radius_at(&self, y: f64, x: f64, scale: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let dy = y - self.cy;
        let dx = x - self.cx;
        let u = (c * dx + s * dy) / (self.rx * scale);
        let v = (-s * dx + c * dy) / (self.ry * scale);
        (u * u + v * v).sqrt()
    }

    /// Point at elliptical radius `t` in direction `phi`.
    fn point(&self, t: f64, phi: f64) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let u = t * self.rx * phi.cos();
        let v = t * self.ry * phi.sin();
        (self.cy + s * u + c * v, self.cx + c * u - s * v)
    }
}

/// Adds `f(y, x)` over the pixels of a box around `(cy, cx)`, keeping the max.
fn splat_max(img: &mut Image2D<f64>, cy: f64, cx: f64, half: f64, f: impl Fn(f64, f64) -> f64) {
    let (h, w) = img.dims();
    let r0 = (cy - half).floor().max(0.0) as usize;
    let r1 = ((cy + half).ceil() as isize).min(h as isize - 1);
    let c0 = (cx - half).floor().max(0.0) as usize;
    let c1 = ((cx + half).ceil() as isize).min(w as isize - 1);
    if r1 < 0 || c1 < 0 {
        return;
    }
    for r in r0..=r1 as usize {
        for c in c0..=c1 as usize {
            let v = f(r as f64, c as f64);
            if v > img.get(r, c) {
                img.set(r, c, v);
            }
        }
    }
}

fn segment_distance(y: f64, x: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dy, dx) = (b.0 - a.0, b.1 - a.1);
    let len2 = dy * dy + dx * dx;
    let t = if len2 > 0.0 { (((y - a.0) * dy + (x - a.1) * dx) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (py, px) = (a.0 + t * dy, a.1 + t * dx);
    ((y - py).powi(2) + (x - px).powi(2)).sqrt()
}

/// The four clean target layers plus the cell body mask, all in [0, 1].
struct Scene {
    body: Image2D<f64>,
    layers: [Image2D<f64>; 4],
}

fn render_scene<R: Rng>(size: usize, style: &StudyStyle, rng: &mut R) -> Scene {
    let tiles = (size as f64 / 64.0).powi(2);
    let n_cells = ((style.cells_per_tile * tiles) as usize).max(2);
    let cells: Vec<Cell> = (0..n_cells)
        .map(|_| {
            let r = style.cell_radius;
            Cell {
                cy: rng.random_range(0.0..size as f64),
                cx: rng.random_range(0.0..size as f64),
                ry: r * rng.random_range(0.75..1.1),
                rx: r * rng.random_range(0.9..1.3),
                angle: rng.random_range(0.0..std::f64::consts::PI),
            }
        })
        .collect();

    let blank = || Image2D::<f64>::filled(size, size, 0.0);
    let mut body = blank();
    let [mut nucleus, mut mito, mut tubulin, mut actin] = [blank(), blank(), blank(), blank()];
    for cell in &cells {
        let reach = cell.rx.max(cell.ry) * 1.3;
        splat_max(&mut body, cell.cy, cell.cx, reach, |y, x| {
            let d = cell.radius_at(y, x, 1.0);
            1.0 / (1.0 + ((d - 1.0) / 0.06).exp())
        });
        splat_max(&mut nucleus, cell.cy, cell.cx, reach, |y, x| {
            let d = cell.radius_at(y, x, 0.45);
            (-1.5 * d.powi(4)).exp()
        });
        splat_max(&mut actin, cell.cy, cell.cx, reach, |y, x| {
            let d = cell.radius_at(y, x, 1.0);
            (-((d - 0.95) / 0.07).powi(2)).exp()
        });
        for _ in 0..rng.random_range(10..18) {
            let t = rng.random_range(0.55..0.9);
            let (gy, gx) = cell.point(t, rng.random_range(0.0..std::f64::consts::TAU));
            let s = style.granule_sigma * rng.random_range(0.8..1.3);
            splat_max(&mut mito, gy, gx, 4.0 * s, |y, x| {
                (-((y - gy).powi(2) + (x - gx).powi(2)) / (2.0 * s * s)).exp()
            });
        }
        for _ in 0..rng.random_range(4..8) {
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let bend = rng.random_range(-0.3..0.3);
            let a = cell.point(0.5, phi);
            let b = cell.point(0.92, phi + bend);
            let (my, mx) = ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
            let half = cell.rx.max(cell.ry);
            splat_max(&mut tubulin, my, mx, half, |y, x| (-segment_distance(y, x, a, b).powi(2) / 1.5).exp());
        }
    }
    Scene { body, layers: [nucleus, mito, tubulin, actin] }
}

/// Transmitted-light rendering of the scene, clamped to [0, 1].
fn render_input<R: Rng>(scene: &Scene, modality: Modality, contrast: f64, rng: &mut R) -> Image2D {
    let [nucleus, mito, tubulin, actin] = &scene.layers;
    let (h, w) = scene.body.dims();
    let structure = Image2D::from_fn(h, w, |r, c| {
        0.35 * scene.body.get(r, c)
            + 0.45 * nucleus.get(r, c)
            + 0.2 * mito.get(r, c)
            + 0.15 * tubulin.get(r, c)
            + 0.15 * actin.get(r, c)
    });
    let rendered: Image2D<f64> = match modality {
        Modality::BrightField => {
            let soft = gaussian_blur(&structure, 1.0);
            soft.map(|s| 0.7 - 0.35 * contrast * s)
        }
        Modality::PhaseContrast => {
            let surround = gaussian_blur(&structure, 3.0);
            Image2D::from_fn(h, w, |r, c| 0.45 + 0.8 * contrast * (structure.get(r, c) - surround.get(r, c)) + 0.1 * structure.get(r, c))
        }
        Modality::Dic => {
            let soft = gaussian_blur(&structure, 0.8);
            let at = |r: isize, c: isize| {
                soft.get(r.clamp(0, h as isize - 1) as usize, c.clamp(0, w as isize - 1) as usize)
            };
            Image2D::from_fn(h, w, |r, c| {
                let (r, c) = (r as isize, c as isize);
                let shear = at(r + 1, c + 1) - at(r - 1, c - 1);
                0.5 + 1.2 * contrast * shear
            })
        }
    };
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("positive sigma");
    let data = rendered.data().iter().map(|&v| (v + noise.sample(rng)).clamp(0.0, 1.0) as f32).collect();
    Image2D::from_vec(h, w, data).expect("dims")
}

fn pick_modality<R: Rng>(mix: &[f64; 3], rng: &mut R) -> Modality {
    let total: f64 = mix.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (m, &wt) in Modality::ALL.iter().zip(mix) {
        if u < wt {
            return *m;
        }
        u -= wt;
    }
    *Modality::ALL.iter().zip(mix).rev().find(|(_, w)| **w > 0.0).expect("positive weight").0
}

/// Which organelles a record is annotated for. When every draw fails, the
/// organelle with the highest presence probability is kept so the record
/// stays usable.
fn pick_targets<R: Rng>(sparsity: &[f64; 4], rng: &mut R) -> Vec<Organelle> {
    let mut present: Vec<Organelle> =
        Organelle::ALL.into_iter().filter(|o| rng.random_bool(sparsity[o.index()])).collect();
    if present.is_empty() {
        let best = Organelle::ALL
            .into_iter()
            .fold(Organelle::Nucleus, |b, o| if sparsity[o.index()] > sparsity[b.index()] { o } else { b });
        present.push(best);
    }
    present
}

/// One generated record held in memory.
pub struct SynthSample {
    pub meta: SampleMeta,
    pub input: Image2D,
    pub targets: BTreeMap<Organelle, Image2D>,
}

/// Generates record `index` of `study` without touching the file system.
pub fn generate_sample(cfg: &SynthConfig, study: usize, index: usize) -> SynthSample {
    let style = study_style(cfg.seed, study);
    let mut rng = record_rng(cfg.seed, study, index as u64);
    let modality = pick_modality(&cfg.modality_mix, &mut rng);
    let present = pick_targets(&cfg.sparsity, &mut rng);
    let scene = render_scene(cfg.image_size, &style, &mut rng);
    let input = render_input(&scene, modality, style.contrast, &mut rng);
    let noise = Normal::new(0.0, TARGET_NOISE_SIGMA).expect("positive sigma");
    let targets = present
        .into_iter()
        .map(|o| {
            let layer = &scene.layers[o.index()];
            let data = layer
                .data()
                .iter()
                .map(|&v| {
                    let v = TARGET_BACKGROUND + (1.0 - TARGET_BACKGROUND) * v + noise.sample(&mut rng);
                    v.clamp(0.0, 1.0) as f32
                })
                .collect();
            (o, Image2D::from_vec(layer.height(), layer.width(), data).expect("dims"))
        })
        .collect();
    SynthSample { meta: SampleMeta { study_id: study_id(study), modality }, input, targets }
}

/// Writes the dataset under `out_dir` and returns the manifest path.
///
/// Layout: `<out>/manifest.tsv` and `<out>/<study>/<index>_<channel>.lmci`.
pub fn generate(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<PathBuf, SynthError> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| SynthError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let jobs: Vec<(usize, usize)> =
        (0..cfg.n_studies).flat_map(|s| (0..cfg.images_per_study).map(move |i| (s, i))).collect();
    let records = jobs
        .par_iter()
        .map(|&(study, index)| {
            let sample = generate_sample(cfg, study, index);
            let dir = out_dir.join(&sample.meta.study_id);
            let input_path = dir.join(format!("{index:04}_input.lmci"));
            write_image(&input_path, &sample.input)?;
            let mut targets = BTreeMap::new();
            for (o, img) in &sample.targets {
                let path = dir.join(format!("{index:04}_{}.lmci", o.name()));
                write_image(&path, img)?;
                targets.insert(*o, path);
            }
            Ok(SampleRecord { input_path, meta: sample.meta, targets })
        })
        .collect::<Result<Vec<_>, SynthError>>()?;

    let manifest = out_dir.join(MANIFEST_NAME);
    fs::write(&manifest, format_manifest(&records, out_dir)).map_err(io_err(&manifest))?;
    Ok(manifest)
}
