//! Finite-difference checks of the analytic gradients: each objective term
//! with respect to the prediction, and the combined objective with respect
//! to every parameter of a tiny model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::image::{Image2D, Organelle};
use crate::model::{Model, ModelConfig, ModelError, Strategy};
use crate::objective::{combined, grad_check, relative_error, LossTerm, ObjectiveError, ObjectiveWeights, SsimConfig};

pub const FD_STEP: f64 = 1e-6;
pub const TERM_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;
pub const TERM_SIZE: usize = 16;
pub const MODEL_SIZE: usize = 8;
/// The model check runs on 8x8 inputs, too small for an 11x11 window.
pub const MODEL_SSIM_WINDOW: usize = 7;

#[derive(Debug, Error)]
pub enum GradCheckError {
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Check {
    Mse,
    Ssim,
    Pcc,
    Cd,
    Combined,
    /// Combined objective through a levels=1, base=2 model, all parameters.
    Model,
}

impl Check {
    /// The checks run when none is selected.
    pub const DEFAULT: [Check; 5] = [Check::Mse, Check::Ssim, Check::Pcc, Check::Cd, Check::Model];
    pub const ALL: [Check; 6] = [Check::Mse, Check::Ssim, Check::Pcc, Check::Cd, Check::Combined, Check::Model];

    pub fn name(self) -> &'static str {
        match self {
            Check::Mse => "mse",
            Check::Ssim => "ssim",
            Check::Pcc => "pcc",
            Check::Cd => "cd",
            Check::Combined => "combined",
            Check::Model => "model",
        }
    }

    pub fn tolerance(self) -> f64 {
        match self {
            Check::Model => MODEL_TOLERANCE,
            _ => TERM_TOLERANCE,
        }
    }
}

impl std::str::FromStr for Check {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown check {s:?}; expected one of mse, ssim, pcc, cd, combined, model"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckResult {
    pub check: Check,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

pub fn random_image(h: usize, w: usize, rng: &mut impl Rng) -> Image2D<f64> {
    Image2D::from_fn(h, w, |_, _| rng.random::<f64>())
}

/// Runs `check` on seeded random data. `tolerance` overrides the default
/// threshold.
pub fn run_check(check: Check, seed: u64, tolerance: Option<f64>) -> Result<CheckResult, GradCheckError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let term = match check {
        Check::Mse => Some(LossTerm::Mse),
        Check::Ssim => Some(LossTerm::Ssim(SsimConfig::default())),
        Check::Pcc => Some(LossTerm::Pcc),
        Check::Cd => Some(LossTerm::Cosine),
        Check::Combined => Some(LossTerm::Combined(ObjectiveWeights::default(), SsimConfig::default())),
        Check::Model => None,
    };
    let max_relative_error = match term {
        Some(term) => {
            let p = random_image(TERM_SIZE, TERM_SIZE, &mut rng);
            let gt = random_image(TERM_SIZE, TERM_SIZE, &mut rng);
            grad_check(&term, &p, &gt, FD_STEP)?
        }
        None => {
            let cfg = ModelConfig {
                levels: 1,
                base_channels: 2,
                strategy: Strategy::Separate(Organelle::Nucleus),
                seed,
                ..ModelConfig::default()
            };
            let mut model = Model::new(cfg)?;
            let x = random_image(MODEL_SIZE, MODEL_SIZE, &mut rng);
            let gt = random_image(MODEL_SIZE, MODEL_SIZE, &mut rng);
            let ssim = SsimConfig::new(MODEL_SSIM_WINDOW, 1.5, 1.0);
            model_param_error(&mut model, &x, &gt, Organelle::Nucleus, &ObjectiveWeights::default(), &ssim, FD_STEP)?
        }
    };
    Ok(CheckResult { check, max_relative_error, tolerance: tolerance.unwrap_or(check.tolerance()) })
}

/// Worst relative error between backpropagated parameter gradients of the
/// combined objective and central differences. Parameters are restored
/// before returning.
pub fn model_param_error(
    model: &mut Model,
    input: &Image2D<f64>,
    target: &Image2D<f64>,
    organelle: Organelle,
    weights: &ObjectiveWeights,
    ssim: &SsimConfig,
    step: f64,
) -> Result<f64, GradCheckError> {
    let loss = |m: &Model| -> Result<f64, GradCheckError> {
        let (p, _) = m.forward(input, organelle)?;
        Ok(combined(&p, target, weights, ssim)?.combined)
    };
    let (p, cache) = model.forward(input, organelle)?;
    let report = combined(&p, target, weights, ssim)?;
    let grads = model.backward(cache, &[report.grad])?;
    let mut worst = 0.0f64;
    for t in 0..grads.len() {
        for i in 0..grads.data(t).len() {
            let orig = model.params().data(t)[i];
            model.params_mut().data_mut(t)[i] = orig + step;
            let up = loss(model);
            model.params_mut().data_mut(t)[i] = orig - step;
            let down = loss(model);
            model.params_mut().data_mut(t)[i] = orig;
            let numeric = (up? - down?) / (2.0 * step);
            worst = worst.max(relative_error(grads.data(t)[i], numeric));
        }
    }
    Ok(worst)
}
