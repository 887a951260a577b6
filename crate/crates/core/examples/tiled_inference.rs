//! Grid sampling and Hann-window blending of overlapping patches.
//!
//! cargo run --release --example tiled_inference

use std::error::Error;

use vstain::image::Image2D;
use vstain::patcher::{assemble, extract, hann_window, plan_grid, tiled_map, PatchError, DEFAULT_WINDOW_FLOOR};

fn main() -> Result<(), Box<dyn Error>> {
    let img = Image2D::from_fn(700, 1000, |r, c| ((r as f32 * 0.05).sin() * (c as f32 * 0.03).cos() + 1.0) / 2.0);

    for (patch, stride) in [(512, 512), (512, 256), (256, 128), (128, 32)] {
        let grid = plan_grid(img.height(), img.width(), patch, stride)?;
        let window = hann_window(patch, DEFAULT_WINDOW_FLOOR)?;
        let back = assemble(&extract(&img, &grid)?, &grid, &window)?;
        let err = back.data().iter().zip(img.data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        println!("patch {patch:3} stride {stride:3}: {:3} patches, round-trip max error {err:.2e}", grid.len());
    }

    // A per-patch "model" that brightens by a patch-dependent amount; the
    // window hides the seams that plain averaging would leave.
    let window = hann_window(256, DEFAULT_WINDOW_FLOOR)?;
    let blended = tiled_map(&img, 256, 128, &window, |patch| -> Result<Image2D, PatchError> {
        let shift = patch.mean() as f32 * 0.1;
        Ok(patch.map(|v| v + shift))
    })?;
    println!("tiled output {}x{}", blended.height(), blended.width());

    // Images smaller than the patch are reflect-padded and cropped back.
    let small = Image2D::from_fn(100, 150, |r, c| (r + c) as f32 / 250.0);
    let out = tiled_map(&small, 256, 128, &window, |p| -> Result<Image2D, PatchError> { Ok(p.clone()) })?;
    assert_eq!(out.dims(), small.dims());
    println!("100x150 input through 256 px patches -> {:?}", out.dims());
    Ok(())
}
