//! Generating a sparse multi-study dataset, splitting it and drawing
//! study-balanced samples.
//!
//! cargo run --release --example synth_dataset

use std::collections::BTreeMap;
use std::error::Error;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vstain::image::Organelle;
use vstain::imageio::{read_image, write_pgm8};
use vstain::synth::{generate, SynthConfig};
use vstain::trainer::{build_index, Split, SplitMode, StudySampler};

fn main() -> Result<(), Box<dyn Error>> {
    let dir = std::env::temp_dir().join("vstain-synth");
    let cfg = SynthConfig { seed: 5, n_studies: 4, images_per_study: 12, image_size: 128, ..SynthConfig::default() };
    let manifest = generate(&cfg, &dir)?;
    println!("manifest: {}", manifest.display());

    let index = build_index(&manifest, 0.8, 0, SplitMode::Study)?;
    println!(
        "{} records, {} train / {} validation (whole studies per side)",
        index.records.len(),
        index.indices(Split::Train).len(),
        index.indices(Split::Validation).len()
    );
    for o in Organelle::ALL {
        let n = index.records.iter().filter(|r| r.has(o)).count();
        println!("  {:<13} annotated in {n:2} of {}", o.name(), index.records.len());
    }

    let sampler = StudySampler::new(&index, Some(Organelle::Tubulin))?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut per_study: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..3000 {
        let r = &index.records[sampler.sample(&mut rng)];
        *per_study.entry(r.meta.study_id.clone()).or_default() += 1;
    }
    println!("tubulin-annotated draws per study over 3000 samples: {per_study:?}");

    let first = &index.records[0];
    write_pgm8(dir.join("preview_input.pgm"), &read_image(&first.input_path)?)?;
    for (o, path) in &first.targets {
        write_pgm8(dir.join(format!("preview_{}.pgm", o.name())), &read_image(path)?)?;
    }
    println!("previews of {} ({}) in {}", first.input_path.display(), first.meta.modality, dir.display());
    Ok(())
}
