//! Evaluation metrics, per-organelle aggregation and the Wilcoxon
//! signed-rank test.
//!
//! Nucleus and mitochondria are scored with MAE, SSIM, PCC, CD and ED;
//! tubulin and actin with SSIM and PCC only.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::image::{Image2D, Organelle};
use crate::objective::{cosine_distance, pcc, ssim, ObjectiveError, SsimConfig};

/// Largest sample size for which the exact null distribution is enumerated.
pub const WILCOXON_EXACT_MAX: usize = 12;
pub const WILCOXON_MIN_PAIRS: usize = 6;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("nothing to aggregate")]
    Empty,
    #[error("paired samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {WILCOXON_MIN_PAIRS} pairs, got {0}")]
    TooFewPairs(usize),
    #[error("all paired differences are zero; the test is undefined")]
    AllZeroDifferences,
    #[error("non-finite value in paired samples")]
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Mae,
    Ssim,
    Pcc,
    Cd,
    Ed,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Mae, Metric::Ssim, Metric::Pcc, Metric::Cd, Metric::Ed];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mae => "MAE",
            Metric::Ssim => "SSIM",
            Metric::Pcc => "PCC",
            Metric::Cd => "CD",
            Metric::Ed => "ED",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Ssim | Metric::Pcc)
    }

    pub fn arrow(self) -> &'static str {
        if self.higher_is_better() {
            "↑"
        } else {
            "↓"
        }
    }

    /// The metrics reported for `organelle`.
    pub fn for_organelle(organelle: Organelle) -> &'static [Metric] {
        match organelle {
            Organelle::Nucleus | Organelle::Mitochondria => &Metric::ALL,
            Organelle::Tubulin | Organelle::Actin => &[Metric::Ssim, Metric::Pcc],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub record: String,
    pub organelle: Organelle,
    pub values: BTreeMap<Metric, f64>,
}

impl MetricRow {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        self.values.get(&metric).copied()
    }
}

/// Scores prediction `p` against ground truth `gt`. Both are expected in
/// [0, 1]; neither is rescaled here.
pub fn evaluate_pair(
    p: &Image2D,
    gt: &Image2D,
    organelle: Organelle,
    record: impl Into<String>,
    ssim_cfg: &SsimConfig,
) -> Result<MetricRow, MetricsError> {
    let (p, gt) = (p.to_f64(), gt.to_f64());
    let mut values = BTreeMap::new();
    for &metric in Metric::for_organelle(organelle) {
        let v = match metric {
            Metric::Mae => mae(&p, &gt)?,
            Metric::Ssim => ssim(&p, &gt, ssim_cfg)?.value,
            Metric::Pcc => pcc(&p, &gt)?.value,
            Metric::Cd => cosine_distance(&p, &gt)?.value,
            Metric::Ed => euclidean_distance(&p, &gt)?,
        };
        values.insert(metric, v);
    }
    Ok(MetricRow { record: record.into(), organelle, values })
}

fn check_dims(p: &Image2D<f64>, gt: &Image2D<f64>) -> Result<(), MetricsError> {
    if p.dims() != gt.dims() || p.is_empty() {
        return Err(ObjectiveError::DimensionMismatch(p.height(), p.width(), gt.height(), gt.width()).into());
    }
    Ok(())
}

pub fn mae(p: &Image2D<f64>, gt: &Image2D<f64>) -> Result<f64, MetricsError> {
    check_dims(p, gt)?;
    Ok(p.data().iter().zip(gt.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64)
}

/// Unnormalized Euclidean norm of the pixelwise difference.
pub fn euclidean_distance(p: &Image2D<f64>, gt: &Image2D<f64>) -> Result<f64, MetricsError> {
    check_dims(p, gt)?;
    Ok(p.data().iter().zip(gt.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricMean {
    pub mean: f64,
    pub n: usize,
}

/// Per-organelle, per-metric means.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub entries: BTreeMap<(Organelle, Metric), MetricMean>,
}

impl Report {
    pub fn get(&self, organelle: Organelle, metric: Metric) -> Option<f64> {
        self.entries.get(&(organelle, metric)).map(|m| m.mean)
    }

    /// `organelle,metric,mean,n`, in table column order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("organelle,metric,mean,n\n");
        for o in Organelle::ALL {
            for &m in Metric::for_organelle(o) {
                if let Some(e) = self.entries.get(&(o, m)) {
                    let _ = writeln!(out, "{},{},{},{}", o.name(), m.name(), e.mean, e.n);
                }
            }
        }
        out
    }
}

pub fn aggregate(rows: &[MetricRow]) -> Result<Report, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sums: BTreeMap<(Organelle, Metric), (f64, usize)> = BTreeMap::new();
    for row in rows {
        for (&m, &v) in &row.values {
            let e = sums.entry((row.organelle, m)).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    let entries = sums.into_iter().map(|(k, (s, n))| (k, MetricMean { mean: s / n as f64, n })).collect();
    Ok(Report { entries })
}

/// Aligned text table with one row per labelled report and a column per
/// (organelle, metric). Missing cells print as `-`.
pub fn format_table(title: &str, rows: &[(String, Report)]) -> String {
    let columns: Vec<(Organelle, Metric)> =
        Organelle::ALL.iter().flat_map(|&o| Metric::for_organelle(o).iter().map(move |&m| (o, m))).collect();
    let label_w = rows.iter().map(|(l, _)| l.chars().count()).chain(["Method".len()]).max().unwrap_or(6);
    let cell = |o: Organelle, m: Metric, r: &Report| match r.get(o, m) {
        Some(v) if m == Metric::Ed => format!("{v:.3}"),
        Some(v) => format!("{v:.4}"),
        None => "-".to_string(),
    };
    let mut widths: Vec<usize> = columns.iter().map(|&(_, m)| m.name().len() + 2).collect();
    for (_, r) in rows {
        for (w, &(o, m)) in widths.iter_mut().zip(&columns) {
            *w = (*w).max(cell(o, m, r).len());
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let mut groups = format!("{:label_w$}", "");
    let mut i = 0;
    for o in Organelle::ALL {
        let k = Metric::for_organelle(o).len();
        let span: usize = widths[i..i + k].iter().sum::<usize>() + 3 * (k - 1);
        let _ = write!(groups, " | {:^span$}", o.name());
        i += k;
    }
    let _ = writeln!(out, "{}", groups.trim_end());
    let mut header = format!("{:label_w$}", "Method");
    for (w, &(_, m)) in widths.iter().zip(&columns) {
        let _ = write!(header, " | {:>w$}", format!("{} {}", m.name(), m.arrow()), w = *w);
    }
    let _ = writeln!(out, "{header}");
    let _ = writeln!(out, "{}", "-".repeat(header.chars().count()));
    for (label, r) in rows {
        let mut line = format!("{label:label_w$}");
        for (w, &(o, m)) in widths.iter().zip(&columns) {
            let _ = write!(line, " | {:>w$}", cell(o, m, r), w = *w);
        }
        let _ = writeln!(out, "{line}");
    }
    out
}

/// Two-sided Wilcoxon signed-rank p-value for paired samples.
///
/// Zero differences are dropped and tied magnitudes receive average ranks.
/// Up to [`WILCOXON_EXACT_MAX`] nonzero differences the null distribution is
/// enumerated exactly; beyond that a normal approximation with tie-corrected
/// variance is used.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < WILCOXON_MIN_PAIRS {
        return Err(MetricsError::TooFewPairs(a.len()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(MetricsError::AllZeroDifferences);
    }
    let n = diffs.len();
    let ranks = average_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let center = ranks.iter().sum::<f64>() / 2.0;
    let observed = (w_plus - center).abs();

    if n <= WILCOXON_EXACT_MAX {
        let tol = 1e-9 * (1.0 + center);
        let extreme = (0u32..1 << n)
            .filter(|mask| {
                let w: f64 = ranks.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, r)| r).sum();
                (w - center).abs() >= observed - tol
            })
            .count();
        return Ok(extreme as f64 / (1u64 << n) as f64);
    }

    let nf = n as f64;
    let mut sorted: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    sorted.sort_by(f64::total_cmp);
    let tie_term: f64 = sorted
        .chunk_by(|x, y| x == y)
        .map(|g| {
            let t = g.len() as f64;
            t * t * t - t
        })
        .sum();
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = observed / var.sqrt();
    let normal = Normal::standard();
    Ok((2.0 * (1.0 - normal.cdf(z))).min(1.0))
}

/// 1-based ranks with ties sharing the mean of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(h: usize, w: usize, rng: &mut impl Rng) -> Image2D {
        Image2D::from_fn(h, w, |_, _| rng.random::<f32>())
    }

    #[test]
    fn identical_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random(16, 16, &mut rng);
        let row = evaluate_pair(&img, &img, Organelle::Nucleus, "r", &SsimConfig::default()).unwrap();
        assert_eq!(row.get(Metric::Mae), Some(0.0));
        assert_eq!(row.get(Metric::Ed), Some(0.0));
        assert!((row.get(Metric::Ssim).unwrap() - 1.0).abs() < 1e-9);
        assert!((row.get(Metric::Pcc).unwrap() - 1.0).abs() < 1e-9);
        assert!(row.get(Metric::Cd).unwrap().abs() < 1e-9);
    }

    #[test]
    fn tubulin_and_actin_rows_carry_two_metrics() {
        let img = Image2D::from_fn(16, 16, |r, c| ((r * 16 + c) % 7) as f32 / 7.0);
        for o in [Organelle::Tubulin, Organelle::Actin] {
            let row = evaluate_pair(&img, &img, o, "r", &SsimConfig::default()).unwrap();
            assert_eq!(row.values.keys().copied().collect::<Vec<_>>(), vec![Metric::Ssim, Metric::Pcc]);
        }
    }

    #[test]
    fn constant_offset_euclidean_distance() {
        // 0.07 is not exact in f32, so the reference uses the stored offset.
        let gt = Image2D::filled(2048, 2048, 0.5f32);
        let p = gt.map(|v| v + 0.07);
        let offset = f64::from(p.get(0, 0)) - 0.5;
        let ed = euclidean_distance(&p.to_f64(), &gt.to_f64()).unwrap();
        assert!((ed - offset * 2048.0).abs() < 1e-6);
        assert!((ed - 143.36).abs() < 1e-3);
    }

    #[test]
    fn aggregation_means() {
        let row = |mae: f64| MetricRow {
            record: String::new(),
            organelle: Organelle::Nucleus,
            values: BTreeMap::from([(Metric::Mae, mae)]),
        };
        let single = aggregate(&[row(0.02)]).unwrap();
        assert_eq!(single.get(Organelle::Nucleus, Metric::Mae), Some(0.02));
        let two = aggregate(&[row(0.02), row(0.04)]).unwrap();
        assert!((two.get(Organelle::Nucleus, Metric::Mae).unwrap() - 0.03).abs() < 1e-15);
        assert_eq!(two.entries[&(Organelle::Nucleus, Metric::Mae)].n, 2);
        assert!(matches!(aggregate(&[]), Err(MetricsError::Empty)));
        assert_eq!(two.to_csv(), "organelle,metric,mean,n\nnucleus,MAE,0.03,2\n");
    }

    #[test]
    fn table_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<MetricRow> = Organelle::ALL
            .iter()
            .map(|&o| {
                evaluate_pair(&random(16, 16, &mut rng), &random(16, 16, &mut rng), o, "x", &SsimConfig::default())
                    .unwrap()
            })
            .collect();
        let report = aggregate(&rows).unwrap();
        let table = format_table("demo", &[("Combined".into(), report.clone()), ("Empty".into(), Report::default())]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "demo");
        assert!(lines[1].contains("nucleus") && lines[1].contains("actin"));
        assert_eq!(lines[2].matches('↓').count(), 6);
        assert_eq!(lines[2].matches('↑').count(), 8);
        assert_eq!(lines[4].split(" | ").count(), 15);
        assert_eq!(lines[5].matches(" - ").count() + usize::from(lines[5].ends_with('-')), 14);
        assert!(lines.iter().skip(2).all(|l| l.chars().count() == lines[2].chars().count()));
        assert_eq!(report.to_csv().lines().count(), 1 + 14);
    }

    #[test]
    fn wilcoxon_all_positive_six() {
        let a = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let b = [1.0, 1.5, 2.0, 2.5, 2.0, 1.0];
        assert_eq!(wilcoxon_signed_rank(&a, &b).unwrap(), 0.03125);
        assert_eq!(wilcoxon_signed_rank(&b, &a).unwrap(), 0.03125);
    }

    #[test]
    fn wilcoxon_errors() {
        let a = [1.0; 8];
        assert!(matches!(wilcoxon_signed_rank(&a, &a), Err(MetricsError::AllZeroDifferences)));
        assert!(matches!(wilcoxon_signed_rank(&a[..5], &a[..5]), Err(MetricsError::TooFewPairs(5))));
        assert!(matches!(wilcoxon_signed_rank(&a, &a[..7]), Err(MetricsError::LengthMismatch(8, 7))));
    }

    /// Exact enumeration and the normal approximation agree loosely at n = 12.
    #[test]
    fn exact_and_normal_regimes_are_close() {
        let d: Vec<f64> = vec![1.5, -0.4, 2.2, 0.9, -1.1, 3.0, 0.2, 1.7, -0.6, 2.5, 0.8, 1.3];
        let zeros = vec![0.0; d.len()];
        let exact = wilcoxon_signed_rank(&d, &zeros).unwrap();
        let mut d13 = d.clone();
        d13.push(0.05);
        let approx = wilcoxon_signed_rank(&d13, &vec![0.0; 13]).unwrap();
        assert!(exact > 0.0 && exact < 0.1 && approx > 0.0 && approx < 0.1, "{exact} {approx}");
    }

    #[test]
    fn tied_ranks_are_averaged() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    proptest! {
        #[test]
        fn mae_triangle(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (p, q, g) = (random(6, 5, &mut rng).to_f64(), random(6, 5, &mut rng).to_f64(), random(6, 5, &mut rng).to_f64());
            prop_assert!(mae(&p, &g).unwrap() <= mae(&p, &q).unwrap() + mae(&q, &g).unwrap() + 1e-12);
        }

        #[test]
        fn wilcoxon_symmetric_and_bounded(seed in 0u64..500, n in 6usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let p = wilcoxon_signed_rank(&a, &b).unwrap();
            prop_assert!(p > 0.0 && p <= 1.0);
            prop_assert!(p == wilcoxon_signed_rank(&b, &a).unwrap());
        }
    }
}
