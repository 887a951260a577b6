//! Shared-encoder training on sparse annotations: only decoders whose
//! organelle is annotated receive gradient. Also saves and reloads the
//! checkpoint and predicts a full image with tiled inference.
//!
//! cargo run --release --example shared_encoder

use std::error::Error;

use vstain::image::Organelle;
use vstain::imageio::read_image;
use vstain::model::{load_checkpoint, save_checkpoint, ModelConfig, Strategy};
use vstain::objective::SsimConfig;
use vstain::synth::{generate, SynthConfig};
use vstain::trainer::{build_index, predict_image, train, SplitMode, TrainConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let dir = std::env::temp_dir().join("vstain-shared");
    let synth = SynthConfig { seed: 2, n_studies: 2, images_per_study: 8, image_size: 128, ..SynthConfig::default() };
    let index = build_index(generate(&synth, &dir)?, 0.8, 0, SplitMode::Image)?;

    let model_cfg = ModelConfig { levels: 2, base_channels: 4, strategy: Strategy::Shared, ..ModelConfig::default() };
    let separate = ModelConfig { strategy: Strategy::Separate(Organelle::Nucleus), ..model_cfg.clone() };
    let shared_count = vstain::model::init_params(&model_cfg)?.scalar_count();
    let separate_count = vstain::model::init_params(&separate)?.scalar_count();
    println!("parameters: shared {shared_count}, one separate model {separate_count}");

    let cfg = TrainConfig {
        patch_size: 64,
        stride: 32,
        steps: 60,
        val_every: 20,
        ssim: SsimConfig::default(),
        ..TrainConfig::default()
    };
    let outcome = train(&index, &model_cfg, &cfg)?;
    for row in outcome.history.iter().filter(|r| r.validation.is_some()) {
        let v = row.validation.unwrap();
        println!("step {:3}: loss {:.4}  val ssim {:.4}  val pcc {:.4}", row.step, row.combined, v.ssim, v.pcc);
    }

    let path = dir.join("shared.lmck");
    save_checkpoint(&outcome.model, &path)?;
    let model = load_checkpoint(&path)?;
    assert_eq!(model.params(), outcome.model.params());
    println!("checkpoint round trip exact: {}", path.display());

    let input = read_image(&index.records[0].input_path)?;
    for o in Organelle::ALL {
        let pred = predict_image(&model, &input, o, 64, 32)?;
        let (lo, hi) = pred.min_max().expect("non-empty");
        println!("{:<13} prediction range [{lo:.3}, {hi:.3}]", o.name());
    }
    Ok(())
}
