//! A miniature ablation over strategy, patch size and objective, driven
//! through the same entry point as the command-line tool.
//!
//! cargo run --release --example ablation

fn main() {
    let dir = std::env::temp_dir().join("vstain-ablation");
    let data = dir.join("data");
    let data_s = data.display().to_string();
    let manifest = data.join("manifest.tsv").display().to_string();
    let out = dir.join("report").display().to_string();

    let code = vstain::cli::run(["vstain", "synth", "--out", &data_s, "--studies", "3", "--per-study", "6", "--size", "128"]);
    assert_eq!(code, 0);
    let code = vstain::cli::run([
        "vstain", "ablate", "--manifest", &manifest, "--out", &out,
        "--organelles", "nucleus,mitochondria",
        "--patches", "128,64,32", "--base-patch", "64", "--resample-size", "64",
        "--steps", "40", "--levels", "2", "--base-channels", "4",
    ]);
    std::process::exit(i32::from(code));
}
