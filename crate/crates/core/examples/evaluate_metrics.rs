//! Scoring predictions, building a results table and testing a paired
//! difference for significance.
//!
//! cargo run --release --example evaluate_metrics

use std::error::Error;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vstain::image::{gaussian_blur, Image2D, Organelle};
use vstain::metrics::{aggregate, evaluate_pair, format_table, wilcoxon_signed_rank, Metric};
use vstain::objective::SsimConfig;

fn main() -> Result<(), Box<dyn Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = SsimConfig::default();
    let (mut sharp_rows, mut blurry_rows) = (Vec::new(), Vec::new());
    for i in 0..10 {
        for o in Organelle::ALL {
            let noise = Image2D::from_fn(64, 64, |_, _| rng.random::<f64>());
            let gt = gaussian_blur(&noise, 2.0).to_f32();
            let gt = vstain::image::normalize_min_max(&gt);
            let close = Image2D::from_fn(64, 64, |r, c| (gt.get(r, c) + 0.05 * (rng.random::<f32>() - 0.5)).clamp(0.0, 1.0));
            let blurry = gaussian_blur(&close.to_f64(), 2.5).to_f32();
            sharp_rows.push(evaluate_pair(&close, &gt, o, format!("img{i}"), &cfg)?);
            blurry_rows.push(evaluate_pair(&blurry, &gt, o, format!("img{i}"), &cfg)?);
        }
    }

    let sharp = aggregate(&sharp_rows)?;
    let blurry = aggregate(&blurry_rows)?;
    print!("{}", format_table("Synthetic comparison", &[("Sharp".into(), sharp.clone()), ("Blurred".into(), blurry)]));
    println!();
    print!("{}", sharp.to_csv());

    let pick = |rows: &[vstain::metrics::MetricRow]| -> Vec<f64> {
        rows.iter().filter(|r| r.organelle == Organelle::Nucleus).map(|r| r.get(Metric::Ssim).unwrap()).collect()
    };
    let p = wilcoxon_signed_rank(&pick(&sharp_rows), &pick(&blurry_rows))?;
    println!("\nnucleus SSIM, sharp vs blurred: Wilcoxon p = {p:.5}");

    let six_up = wilcoxon_signed_rank(&[2.0, 3.0, 4.0, 5.0, 6.0, 7.0], &[1.0; 6])?;
    println!("six pairs all improving: p = {six_up}");
    Ok(())
}
