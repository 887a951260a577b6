//! The four-term training objective
//!
//! `alpha * MSE + beta * (1 - SSIM) + lambda * (1 - PCC) + omega * CD`
//!
//! with analytic gradients with respect to the prediction. Everything here
//! runs in f64 so gradients can be checked against finite differences.

use thiserror::Error;

use crate::image::{gaussian_kernel, Image2D};

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("dimension mismatch: prediction {0}x{1}, target {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("images are empty")]
    Empty,
    #[error("image {height}x{width} is smaller than the {window}x{window} SSIM window")]
    SmallerThanWindow { height: usize, width: usize, window: usize },
    #[error("invalid SSIM configuration: {0}")]
    BadSsimConfig(&'static str),
    #[error("objective weights must be finite and non-negative")]
    BadWeights,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveWeights {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub omega: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 0.2, lambda: 0.1, omega: 0.1 }
    }
}

impl ObjectiveWeights {
    pub const MSE_ONLY: Self = Self { alpha: 1.0, beta: 0.0, lambda: 0.0, omega: 0.0 };
    pub const SSIM_ONLY: Self = Self { alpha: 0.0, beta: 1.0, lambda: 0.0, omega: 0.0 };
    pub const PCC_ONLY: Self = Self { alpha: 0.0, beta: 0.0, lambda: 1.0, omega: 0.0 };

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let all = [self.alpha, self.beta, self.lambda, self.omega];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(ObjectiveError::BadWeights)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimConfig {
    pub window_size: usize,
    pub gaussian_sigma: f64,
    pub c1: f64,
    pub c2: f64,
    pub data_range: f64,
}

impl SsimConfig {
    /// Gaussian window with the usual `(0.01 L)^2`, `(0.03 L)^2` stabilizers.
    pub fn new(window_size: usize, gaussian_sigma: f64, data_range: f64) -> Self {
        Self {
            window_size,
            gaussian_sigma,
            c1: (0.01 * data_range).powi(2),
            c2: (0.03 * data_range).powi(2),
            data_range,
        }
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if self.window_size < 3 || self.window_size % 2 == 0 {
            return Err(ObjectiveError::BadSsimConfig("window size must be odd and >= 3"));
        }
        if !(self.gaussian_sigma > 0.0) {
            return Err(ObjectiveError::BadSsimConfig("sigma must be positive"));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(ObjectiveError::BadSsimConfig("c1 and c2 must be positive"));
        }
        Ok(())
    }
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self::new(11, 1.5, 1.0)
    }
}

/// A loss value and its gradient with respect to the prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub value: f64,
    pub grad: Image2D<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub mse: f64,
    pub ssim: f64,
    pub pcc: f64,
    pub cd: f64,
    pub combined: f64,
    /// d(combined) / d(prediction)
    pub grad: Image2D<f64>,
}

fn check_pair(p: &Image2D<f64>, gt: &Image2D<f64>) -> Result<(), ObjectiveError> {
    if p.dims() != gt.dims() {
        return Err(ObjectiveError::DimensionMismatch(p.height(), p.width(), gt.height(), gt.width()));
    }
    if p.is_empty() {
        return Err(ObjectiveError::Empty);
    }
    Ok(())
}

fn zeros_like(p: &Image2D<f64>) -> Image2D<f64> {
    Image2D::filled(p.height(), p.width(), 0.0)
}

pub fn mse(p: &Image2D<f64>, gt: &Image2D<f64>) -> Result<Term, ObjectiveError> {
    check_pair(p, gt)?;
    let n = p.len() as f64;
    let mut sum = 0.0;
    let grad: Vec<f64> = p
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&a, &b)| {
            let d = a - b;
            sum += d * d;
            2.0 * d / n
        })
        .collect();
    Ok(Term { value: sum / n, grad: Image2D::from_vec(p.height(), p.width(), grad).expect("dims") })
}

fn centered(data: &[f64]) -> (Vec<f64>, f64) {
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    let c: Vec<f64> = data.iter().map(|v| v - mean).collect();
    let ss = c.iter().map(|v| v * v).sum();
    (c, ss)
}

/// Sum of squared deviations below which an image counts as constant.
const DEGENERATE_VARIANCE: f64 = 1e-20;

/// Pearson correlation over flattened pixels. A constant input on either side
/// yields value 0 and zero gradient.
pub fn pcc(p: &Image2D<f64>, gt: &Image2D<f64>) -> Result<Term, ObjectiveError> {
    check_pair(p, gt)?;
    let n = p.len() as f64;
    let (xc, sxx) = centered(p.data());
    let (yc, syy) = centered(gt.data());
    if sxx / n <= DEGENERATE_VARIANCE || syy / n <= DEGENERATE_VARIANCE {
        return Ok(Term { value: 0.0, grad: zeros_like(p) });
    }
    let sxy: f64 = xc.iter().zip(&yc).map(|(a, b)| a * b).sum();
    let norm = (sxx * syy).sqrt();
    let r = sxy / norm;
    // d r / d x_i = yc_i / norm - r * xc_i / sxx; the mean terms cancel
    let grad = xc.iter().zip(&yc).map(|(x, y)| y / norm - r * x / sxx).collect();
    Ok(Term {
        value: r.clamp(-1.0, 1.0),
        grad: Image2D::from_vec(p.height(), p.width(), grad).expect("dims"),
    })
}

/// `1 - <P, GT> / (|P| |GT|)`. A zero vector on either side yields value 1 and
/// zero gradient.
pub fn cosine_distance(p: &Image2D<f64>, gt: &Image2D<f64>) -> Result<Term, ObjectiveError> {
    check_pair(p, gt)?;
    let pp: f64 = p.data().iter().map(|v| v * v).sum();
    let gg: f64 = gt.data().iter().map(|v| v * v).sum();
    if pp == 0.0 || gg == 0.0 {
        return Ok(Term { value: 1.0, grad: zeros_like(p) });
    }
    let pg: f64 = p.data().iter().zip(gt.data()).map(|(a, b)| a * b).sum();
    let (np, ng) = (pp.sqrt(), gg.sqrt());
    let cos = pg / (np * ng);
    let grad = p
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&x, &y)| -(y / (np * ng) - cos * x / pp))
        .collect();
    Ok(Term {
        value: (1.0 - cos).clamp(0.0, 2.0),
        grad: Image2D::from_vec(p.height(), p.width(), grad).expect("dims"),
    })
}

/// Separable "valid" correlation: output is (h-k+1) x (w-k+1).
fn filter_valid(data: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let k = kernel.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        let row = &data[r * w..(r + 1) * w];
        let out = &mut tmp[r * ow..(r + 1) * ow];
        for (c, o) in out.iter_mut().enumerate() {
            *o = kernel.iter().zip(&row[c..c + k]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        let dst = &mut out[r * ow..(r + 1) * ow];
        for (i, &kv) in kernel.iter().enumerate() {
            let src = &tmp[(r + i) * ow..(r + i + 1) * ow];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters an (h-k+1) x (w-k+1) map back to h x w.
fn filter_valid_adjoint(map: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let k = kernel.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut tmp = vec![0.0; h * ow];
    for r in 0..oh {
        let src = &map[r * ow..(r + 1) * ow];
        for (i, &kv) in kernel.iter().enumerate() {
            let dst = &mut tmp[(r + i) * ow..(r + i + 1) * ow];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        let src = &tmp[r * ow..(r + 1) * ow];
        let dst = &mut out[r * w..(r + 1) * w];
        for (c, &s) in src.iter().enumerate() {
            for (i, &kv) in kernel.iter().enumerate() {
                dst[c + i] += kv * s;
            }
        }
    }
    out
}

/// Mean SSIM over all valid window centers with Gaussian-weighted local
/// statistics, plus its analytic gradient with respect to `p`.
pub fn ssim(p: &Image2D<f64>, gt: &Image2D<f64>, cfg: &SsimConfig) -> Result<Term, ObjectiveError> {
    check_pair(p, gt)?;
    cfg.validate()?;
    let (h, w) = p.dims();
    let k = cfg.window_size;
    if h < k || w < k {
        return Err(ObjectiveError::SmallerThanWindow { height: h, width: w, window: k });
    }
    let kernel = gaussian_kernel(k, cfg.gaussian_sigma);
    let x = p.data();
    let y = gt.data();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();

    let mu_x = filter_valid(x, h, w, &kernel);
    let mu_y = filter_valid(y, h, w, &kernel);
    let e_xx = filter_valid(&xx, h, w, &kernel);
    let e_yy = filter_valid(&yy, h, w, &kernel);
    let e_xy = filter_valid(&xy, h, w, &kernel);

    let centers = mu_x.len();
    let mut total = 0.0;
    let mut coef_a = vec![0.0; centers];
    let mut coef_x = vec![0.0; centers];
    let mut coef_y = vec![0.0; centers];
    for i in 0..centers {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = e_xx[i] - mx * mx;
        let var_y = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        let a1 = 2.0 * mx * my + cfg.c1;
        let a2 = 2.0 * cov + cfg.c2;
        let b1 = mx * mx + my * my + cfg.c1;
        let b2 = var_x + var_y + cfg.c2;
        let s = a1 * a2 / (b1 * b2);
        total += s;
        // dS/dx_j = w_{j-c} * (coef_a + coef_x * x_j + coef_y * y_j)
        coef_a[i] = s * (2.0 * my / a1 - 2.0 * mx / b1 - 2.0 * my / a2 + 2.0 * mx / b2);
        coef_x[i] = -2.0 * s / b2;
        coef_y[i] = 2.0 * s / a2;
    }
    let inv = 1.0 / centers as f64;
    let ga = filter_valid_adjoint(&coef_a, h, w, &kernel);
    let gx = filter_valid_adjoint(&coef_x, h, w, &kernel);
    let gy = filter_valid_adjoint(&coef_y, h, w, &kernel);
    let grad = (0..h * w).map(|j| inv * (ga[j] + x[j] * gx[j] + y[j] * gy[j])).collect();
    Ok(Term {
        value: (total * inv).clamp(-1.0, 1.0),
        grad: Image2D::from_vec(h, w, grad).expect("dims"),
    })
}

/// The weighted objective. Terms with zero weight are still evaluated so the
/// report always carries all four values.
pub fn combined(
    p: &Image2D<f64>,
    gt: &Image2D<f64>,
    weights: &ObjectiveWeights,
    cfg: &SsimConfig,
) -> Result<LossReport, ObjectiveError> {
    weights.validate()?;
    let m = mse(p, gt)?;
    let s = ssim(p, gt, cfg)?;
    let r = pcc(p, gt)?;
    let c = cosine_distance(p, gt)?;
    let value = weights.alpha * m.value
        + weights.beta * (1.0 - s.value)
        + weights.lambda * (1.0 - r.value)
        + weights.omega * c.value;
    let grad: Vec<f64> = (0..p.len())
        .map(|i| {
            weights.alpha * m.grad.data()[i] - weights.beta * s.grad.data()[i]
                - weights.lambda * r.grad.data()[i]
                + weights.omega * c.grad.data()[i]
        })
        .collect();
    Ok(LossReport {
        mse: m.value,
        ssim: s.value,
        pcc: r.value,
        cd: c.value,
        combined: value,
        grad: Image2D::from_vec(p.height(), p.width(), grad).expect("dims"),
    })
}

/// Which scalar function [`grad_check`] differentiates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossTerm {
    Mse,
    Ssim(SsimConfig),
    Pcc,
    Cosine,
    Combined(ObjectiveWeights, SsimConfig),
}

impl LossTerm {
    pub fn name(&self) -> &'static str {
        match self {
            LossTerm::Mse => "mse",
            LossTerm::Ssim(_) => "ssim",
            LossTerm::Pcc => "pcc",
            LossTerm::Cosine => "cd",
            LossTerm::Combined(..) => "combined",
        }
    }

    pub fn evaluate(&self, p: &Image2D<f64>, gt: &Image2D<f64>) -> Result<Term, ObjectiveError> {
        match self {
            LossTerm::Mse => mse(p, gt),
            LossTerm::Ssim(cfg) => ssim(p, gt, cfg),
            LossTerm::Pcc => pcc(p, gt),
            LossTerm::Cosine => cosine_distance(p, gt),
            LossTerm::Combined(w, cfg) => {
                combined(p, gt, w, cfg).map(|r| Term { value: r.combined, grad: r.grad })
            }
        }
    }
}

/// Gradients smaller than this are compared in absolute rather than relative
/// terms by [`relative_error`].
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, GRAD_CHECK_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

/// Worst relative error between the analytic gradient of `term` and a central
/// difference with step `step`, over every pixel of `p`.
pub fn grad_check(
    term: &LossTerm,
    p: &Image2D<f64>,
    gt: &Image2D<f64>,
    step: f64,
) -> Result<f64, ObjectiveError> {
    let analytic = term.evaluate(p, gt)?.grad;
    let mut probe = p.clone();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = term.evaluate(&probe, gt)?.value;
        probe.data_mut()[i] = orig - step;
        let down = term.evaluate(&probe, gt)?.value;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(h: usize, w: usize, seed: u64) -> Image2D<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image2D::from_fn(h, w, |_, _| rng.random::<f64>())
    }

    #[test]
    fn mse_basics() {
        let gt = random(4, 4, 1);
        let t = mse(&gt, &gt).unwrap();
        assert_eq!(t.value, 0.0);
        assert!(t.grad.data().iter().all(|&g| g == 0.0));
        let p = gt.map(|v| v + 0.1);
        assert!((mse(&p, &gt).unwrap().value - 0.01).abs() < 1e-12);
    }

    #[test]
    fn mse_grad_matches_fd() {
        let err = grad_check(&LossTerm::Mse, &random(5, 5, 2), &random(5, 5, 3), 1e-6).unwrap();
        assert!(err < 1e-5, "{err}");
        let err = grad_check(&LossTerm::Mse, &random(8, 8, 4), &random(8, 8, 5), 1e-6).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn mismatch_is_error() {
        assert!(matches!(
            mse(&random(2, 3, 0), &random(3, 2, 0)),
            Err(ObjectiveError::DimensionMismatch(2, 3, 3, 2))
        ));
    }

    #[test]
    fn ssim_identical_is_one() {
        let x = random(16, 16, 7);
        let t = ssim(&x, &x, &SsimConfig::default()).unwrap();
        assert!((t.value - 1.0).abs() < 1e-6);
        let c = Image2D::filled(16, 16, 0.4);
        assert!((ssim(&c, &c, &SsimConfig::default()).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_small_images() {
        assert!(matches!(
            ssim(&random(8, 16, 0), &random(8, 16, 1), &SsimConfig::default()),
            Err(ObjectiveError::SmallerThanWindow { .. })
        ));
    }

    #[test]
    fn ssim_grad_matches_fd() {
        let term = LossTerm::Ssim(SsimConfig::default());
        let err = grad_check(&term, &random(16, 16, 10), &random(16, 16, 11), 1e-6).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn pcc_affine_and_negation() {
        let gt = random(6, 6, 3);
        let p = gt.map(|v| 3.0 * v + 0.5);
        assert!((pcc(&p, &gt).unwrap().value - 1.0).abs() < 1e-12);
        let n = gt.map(|v| 1.0 - v);
        assert!((pcc(&n, &gt).unwrap().value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pcc_degenerate_is_zero() {
        let gt = random(6, 6, 3);
        let c = Image2D::filled(6, 6, 0.3);
        for t in [pcc(&c, &gt).unwrap(), pcc(&gt, &c).unwrap()] {
            assert_eq!(t.value, 0.0);
            assert!(t.grad.data().iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn pcc_grad_matches_fd() {
        let err = grad_check(&LossTerm::Pcc, &random(8, 8, 1), &random(8, 8, 2), 1e-6).unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn cosine_cases() {
        let x = random(4, 4, 1);
        assert!(cosine_distance(&x, &x).unwrap().value.abs() < 1e-12);
        let a = Image2D::from_fn(4, 4, |r, _| if r < 2 { 1.0 } else { 0.0 });
        let b = Image2D::from_fn(4, 4, |r, _| if r < 2 { 0.0 } else { 0.7 });
        assert_eq!(cosine_distance(&a, &b).unwrap().value, 1.0);
        let z = Image2D::filled(4, 4, 0.0);
        let t = cosine_distance(&z, &x).unwrap();
        assert_eq!(t.value, 1.0);
        assert!(t.grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn cosine_grad_matches_fd() {
        let err = grad_check(&LossTerm::Cosine, &random(8, 8, 5), &random(8, 8, 6), 1e-6).unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn combined_vanishes_on_identity() {
        let x = random(16, 16, 9);
        let r = combined(&x, &x, &ObjectiveWeights::default(), &SsimConfig::default()).unwrap();
        assert!(r.combined.abs() < 1e-6, "{}", r.combined);
    }

    #[test]
    fn combined_mse_only_is_bitwise_mse() {
        let (p, gt) = (random(16, 16, 1), random(16, 16, 2));
        let r = combined(&p, &gt, &ObjectiveWeights::MSE_ONLY, &SsimConfig::default()).unwrap();
        let m = mse(&p, &gt).unwrap();
        assert_eq!(r.combined.to_bits(), m.value.to_bits());
    }

    #[test]
    fn combined_grad_matches_fd() {
        let term = LossTerm::Combined(ObjectiveWeights::default(), SsimConfig::default());
        let err = grad_check(&term, &random(16, 16, 21), &random(16, 16, 22), 1e-6).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn negative_weights_rejected() {
        let x = random(16, 16, 0);
        let w = ObjectiveWeights { alpha: -1.0, ..Default::default() };
        assert_eq!(
            combined(&x, &x, &w, &SsimConfig::default()),
            Err(ObjectiveError::BadWeights)
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn value_ranges_and_nonnegativity(seed in 0u64..100_000) {
            let p = random(12, 12, seed);
            let gt = random(12, 12, seed ^ 0xABCD);
            let cfg = SsimConfig::new(7, 1.5, 1.0);
            let r = combined(&p, &gt, &ObjectiveWeights::default(), &cfg).unwrap();
            prop_assert!(r.combined >= 0.0);
            prop_assert!((-1.0..=1.0).contains(&r.ssim));
            prop_assert!((-1.0..=1.0).contains(&r.pcc));
            prop_assert!((0.0..=2.0).contains(&r.cd));
            let recomposed = r.mse + 0.2 * (1.0 - r.ssim) + 0.1 * (1.0 - r.pcc) + 0.1 * r.cd;
            prop_assert!((recomposed - r.combined).abs() < 1e-6);
        }

        #[test]
        fn pcc_positive_affine_invariance(seed in 0u64..100_000, a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let p = random(9, 9, seed);
            let gt = random(9, 9, seed + 1);
            let base = pcc(&p, &gt).unwrap().value;
            let moved = pcc(&p.map(|v| a * v + b), &gt).unwrap().value;
            prop_assert!((base - moved).abs() < 1e-6);
        }
    }
}
