use std::fs;
use std::path::Path;

use vstain::cli::{run, EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, EXIT_RUNTIME};
use vstain::imageio::{read_image, write_image};
use vstain::image::Image2D;

fn cli(args: &[&str]) -> u8 {
    let mut full = vec!["vstain"];
    full.extend_from_slice(args);
    run(full)
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn synth(dir: &Path, seed: &str) -> String {
    let data = dir.join("data");
    let code = cli(&["synth", "--out", &s(&data), "--seed", seed, "--studies", "2", "--per-study", "4", "--size", "128"]);
    assert_eq!(code, EXIT_OK);
    s(&data.join("manifest.tsv"))
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_reproducible_and_requires_out() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), "7");
    synth(b.path(), "7");
    assert_eq!(tree_bytes(a.path()), tree_bytes(b.path()));
    assert_eq!(cli(&["synth", "--seed", "7"]), EXIT_CONFIG);
}

#[test]
fn bad_options_are_config_errors() {
    assert_eq!(cli(&["frobnicate"]), EXIT_CONFIG);
    assert_eq!(cli(&["gradcheck", "--term", "psnr"]), EXIT_CONFIG);
    let dir = tempfile::tempdir().unwrap();
    let out = s(&dir.path().join("o"));
    assert_eq!(cli(&["synth", "--out", &out, "--sparsity", "1,2"]), EXIT_CONFIG);
    assert_eq!(cli(&["synth", "--out", &out, "--size", "16"]), EXIT_CONFIG);
}

#[test]
fn gradcheck_exit_codes() {
    assert_eq!(cli(&["gradcheck", "--term", "ssim"]), EXIT_OK);
    assert_eq!(cli(&["gradcheck", "--term", "ssim", "--tol", "1e-12"]), EXIT_RUNTIME);
}

#[test]
fn train_predict_evaluate_round() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "1");
    let model_dir = dir.path().join("model");
    let common = ["--levels", "2", "--base-channels", "4", "--steps", "8", "--val-every", "4"];
    let mut args = vec!["train", "--manifest", &manifest, "--patch", "64"];
    let model_s = s(&model_dir);
    args.extend_from_slice(&["--out", &model_s]);
    args.extend_from_slice(&common);
    assert_eq!(cli(&args), EXIT_OK);
    let history = fs::read_to_string(model_dir.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 9);

    let ckpt = s(&model_dir.join("model.lmck"));
    let preds = dir.path().join("pred");
    let preds_s = s(&preds);
    assert_eq!(cli(&["predict", "--checkpoint", &ckpt, "--manifest", &manifest, "--out", &preds_s, "--patch", "512"]), EXIT_OK);

    let report = dir.path().join("report.csv");
    let report_s = s(&report);
    assert_eq!(cli(&["evaluate", "--manifest", &manifest, "--predictions", &preds_s, "--report", &report_s]), EXIT_OK);
    let csv = fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "organelle,metric,mean,n");
    // A nucleus model scores only nucleus: five metrics.
    assert_eq!(lines.len(), 6);
    assert!(lines[1..].iter().all(|l| l.starts_with("nucleus,")));
}

#[test]
fn predict_pads_small_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "2");
    let model_dir = s(&dir.path().join("m"));
    let args = ["train", "--manifest", &manifest, "--out", &model_dir, "--patch", "32", "--steps", "2", "--levels", "2", "--base-channels", "2"];
    assert_eq!(cli(&args), EXIT_OK);

    let input = dir.path().join("small.lmci");
    write_image(&input, &Image2D::from_fn(40, 56, |r, c| (r * c) as f32)).unwrap();
    let out = dir.path().join("pred");
    let ckpt = s(&dir.path().join("m").join("model.lmck"));
    assert_eq!(cli(&["predict", "--checkpoint", &ckpt, "--input", &s(&input), "--out", &s(&out), "--patch", "512"]), EXIT_OK);
    let pred = read_image(out.join("small_nucleus.lmci")).unwrap();
    assert_eq!(pred.dims(), (40, 56));
}

#[test]
fn config_file_sits_below_flags() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "3");
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small run\nsteps = 3\npatch = 32\nlevels = 2\nbase-channels = 2\n").unwrap();
    let out = dir.path().join("m");
    let args = ["--config", &s(&cfg), "train", "--manifest", &manifest, "--out", &s(&out), "--steps", "5"];
    assert_eq!(cli(&args), EXIT_OK);
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 6);

    fs::write(&cfg, "stepz = 3\n").unwrap();
    assert_eq!(cli(&["--config", &s(&cfg), "train", "--manifest", &manifest, "--out", &s(&out)]), EXIT_CONFIG);
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "4");
    let out = s(&dir.path().join("m"));
    let args = ["train", "--manifest", &manifest, "--out", &out, "--patch", "32", "--steps", "20", "--levels", "2", "--base-channels", "2", "--lr", "1e30"];
    assert_eq!(cli(&args), EXIT_DIVERGED);
}

#[test]
fn missing_manifest_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(&dir.path().join("m"));
    let missing = s(&dir.path().join("nope.tsv"));
    assert_eq!(cli(&["train", "--manifest", &missing, "--out", &out, "--patch", "32"]), EXIT_RUNTIME);
}
