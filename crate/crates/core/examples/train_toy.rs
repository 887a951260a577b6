//! Generates a small synthetic dataset, trains a nucleus model on 128 px
//! patches and compares its validation SSIM with a constant-image baseline.
//!
//! cargo run --release --example train_toy -- [steps]

use std::error::Error;
use std::time::Instant;

use vstain::image::{normalize_min_max, Image2D, Organelle};
use vstain::imageio::{read_image, write_pgm8};
use vstain::model::{ModelConfig, Strategy};
use vstain::objective::{pcc, ssim, SsimConfig};
use vstain::synth::{generate, SynthConfig};
use vstain::trainer::{build_index, predict_image, train_with_progress, Split, SplitMode, TrainConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let steps = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(500);
    let dir = std::env::temp_dir().join("vstain-train-toy");
    let synth = SynthConfig { seed: 11, n_studies: 3, images_per_study: 20, image_size: 256, ..SynthConfig::default() };
    let manifest = generate(&synth, &dir)?;
    let index = build_index(&manifest, 0.8, 0, SplitMode::Image)?;

    let model_cfg = ModelConfig { strategy: Strategy::Separate(Organelle::Nucleus), ..ModelConfig::default() };
    let cfg = TrainConfig { patch_size: 128, stride: 64, steps, val_every: 100, ..TrainConfig::default() };
    let start = Instant::now();
    let outcome = train_with_progress(&index, &model_cfg, &cfg, |row| {
        if row.step == 1 || row.step % 50 == 0 {
            let val = row.validation.map(|v| format!("  val ssim {:.4}", v.ssim)).unwrap_or_default();
            println!("step {:4}  loss {:.4}{val}", row.step, row.combined);
        }
    })?;
    println!("trained {steps} steps in {:.1}s", start.elapsed().as_secs_f64());

    let ssim_cfg = SsimConfig::default();
    let (mut model_ssim, mut model_pcc, mut base_ssim, mut n) = (0.0, 0.0, 0.0, 0);
    for i in index.indices(Split::Validation) {
        let record = &index.records[i];
        let Some(target_path) = record.targets.get(&Organelle::Nucleus) else { continue };
        let input = read_image(&record.input_path)?;
        let target = normalize_min_max(&read_image(target_path)?);
        let mean = Image2D::filled(target.height(), target.width(), target.mean());
        let target = target.to_f64();
        let pred = predict_image(&outcome.model, &input, Organelle::Nucleus, 128, 64)?.to_f64();
        if n == 0 {
            write_pgm8(dir.join("preview_input.pgm"), &normalize_min_max(&input))?;
            write_pgm8(dir.join("preview_target.pgm"), &target.to_f32())?;
            write_pgm8(dir.join("preview_prediction.pgm"), &pred.to_f32())?;
        }
        model_ssim += ssim(&pred, &target, &ssim_cfg)?.value;
        model_pcc += pcc(&pred, &target)?.value;
        base_ssim += ssim(&mean, &target, &ssim_cfg)?.value;
        n += 1;
    }
    let n = n as f64;
    println!("validation SSIM: model {:.4}, constant mean {:.4}", model_ssim / n, base_ssim / n);
    println!("validation PCC: model {:.4}", model_pcc / n);
    println!("previews written to {}", dir.display());
    Ok(())
}
