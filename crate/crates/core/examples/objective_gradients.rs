//! The combined training objective and finite-difference checks of its
//! gradients.
//!
//! cargo run --release --example objective_gradients

use std::error::Error;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vstain::gradcheck::{run_check, Check};
use vstain::image::Image2D;
use vstain::objective::{combined, ObjectiveWeights, SsimConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gt = Image2D::from_fn(32, 32, |_, _| rng.random::<f64>());
    let noise = Image2D::from_fn(32, 32, |_, _| 0.1 * (rng.random::<f64>() - 0.5));
    let noisy = Image2D::from_fn(32, 32, |r, c| (gt.get(r, c) + noise.get(r, c)).clamp(0.0, 1.0));

    let w = ObjectiveWeights::default();
    let cfg = SsimConfig::default();
    for (name, p) in [("identical", &gt), ("noisy", &noisy)] {
        let r = combined(p, &gt, &w, &cfg)?;
        println!(
            "{name:>9}: mse {:.5}  ssim {:.4}  pcc {:.4}  cd {:.5}  combined {:.5}",
            r.mse, r.ssim, r.pcc, r.cd, r.combined
        );
    }

    // Gradient descent on the pixels themselves using the analytic gradient.
    let mut p = Image2D::filled(32, 32, 0.5);
    for step in 0..=200 {
        let r = combined(&p, &gt, &w, &cfg)?;
        if step % 50 == 0 {
            println!("pixel descent step {step:3}: combined {:.5}", r.combined);
        }
        for (v, g) in p.data_mut().iter_mut().zip(r.grad.data()) {
            *v -= 50.0 * g;
        }
    }

    println!();
    for check in Check::ALL {
        let r = run_check(check, 0, None)?;
        println!("{:<9} max relative error {:.2e} (threshold {:.0e})", check.name(), r.max_relative_error, r.tolerance);
    }
    Ok(())
}
