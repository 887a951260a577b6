//! Overlapping patch grids and Hann-weighted reassembly.

use rayon::prelude::*;
use thiserror::Error;

use crate::image::Image2D;

/// Floor applied to the Hann window so border pixels covered by a single
/// patch still receive non-zero weight.
pub const DEFAULT_WINDOW_FLOOR: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum PatchError {
    #[error("patch size must be at least 1")]
    ZeroPatch,
    #[error("stride {stride} must be in 1..={patch_size}")]
    BadStride { stride: usize, patch_size: usize },
    #[error("image {height}x{width} is smaller than patch size {patch_size}; reflect-pad it first")]
    ImageSmallerThanPatch { height: usize, width: usize, patch_size: usize },
    #[error("window size must be at least 2, got {0}")]
    WindowTooSmall(usize),
    #[error("window floor must lie in (0, 1), got {0}")]
    BadFloor(f64),
    #[error("grid planned for {grid_h}x{grid_w} but image is {height}x{width}")]
    GridMismatch { grid_h: usize, grid_w: usize, height: usize, width: usize },
    #[error("expected {expected} patches, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("patch {index} is {height}x{width}, expected {patch_size}x{patch_size}")]
    PatchShape { index: usize, height: usize, width: usize, patch_size: usize },
    #[error("window is {window} px but grid patches are {patch_size} px")]
    WindowMismatch { window: usize, patch_size: usize },
    #[error("grid has no patches")]
    EmptyGrid,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub stride: usize,
    pub image_height: usize,
    pub image_width: usize,
    /// Top-left anchors, row-major order.
    pub positions: Vec<(usize, usize)>,
}

fn axis_anchors(dim: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut anchors: Vec<usize> = (0..).map(|k| k * stride).take_while(|a| a + patch <= dim).collect();
    if anchors.last() != Some(&(dim - patch)) {
        anchors.push(dim - patch);
    }
    anchors
}

pub fn plan_grid(
    height: usize,
    width: usize,
    patch_size: usize,
    stride: usize,
) -> Result<PatchGrid, PatchError> {
    if patch_size == 0 {
        return Err(PatchError::ZeroPatch);
    }
    if stride == 0 || stride > patch_size {
        return Err(PatchError::BadStride { stride, patch_size });
    }
    if height < patch_size || width < patch_size {
        return Err(PatchError::ImageSmallerThanPatch { height, width, patch_size });
    }
    let rows = axis_anchors(height, patch_size, stride);
    let cols = axis_anchors(width, patch_size, stride);
    let positions = rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect();
    Ok(PatchGrid { patch_size, stride, image_height: height, image_width: width, positions })
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// The same grid reflected left-right, still in row-major order.
    pub fn mirrored_horizontal(&self) -> PatchGrid {
        let mut positions: Vec<_> = self
            .positions
            .iter()
            .map(|&(r, c)| (r, self.image_width - self.patch_size - c))
            .collect();
        positions.sort_unstable();
        PatchGrid { positions, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowMap {
    pub patch_size: usize,
    /// `patch_size * patch_size` weights in (0, 1], row-major.
    pub weights: Vec<f64>,
}

/// 1-D Hann profile `0.5 * (1 - cos(2 pi i / (n - 1)))`, unfloored.
/// The second half is mirrored from the first so the profile is exactly
/// symmetric.
pub fn hann_profile(n: usize) -> Vec<f64> {
    let denom = (n - 1) as f64;
    let mut w: Vec<f64> = (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / denom).cos()))
        .collect();
    for i in 0..n / 2 {
        w[n - 1 - i] = w[i];
    }
    w
}

pub fn hann_window(patch_size: usize, floor_epsilon: f64) -> Result<WindowMap, PatchError> {
    if patch_size < 2 {
        return Err(PatchError::WindowTooSmall(patch_size));
    }
    if !(floor_epsilon > 0.0 && floor_epsilon < 1.0) {
        return Err(PatchError::BadFloor(floor_epsilon));
    }
    let w = hann_profile(patch_size);
    let weights = w
        .iter()
        .flat_map(|&wr| w.iter().map(move |&wc| (wr * wc).max(floor_epsilon)))
        .collect();
    Ok(WindowMap { patch_size, weights })
}

fn check_grid(img_dims: (usize, usize), grid: &PatchGrid) -> Result<(), PatchError> {
    if img_dims != (grid.image_height, grid.image_width) {
        return Err(PatchError::GridMismatch {
            grid_h: grid.image_height,
            grid_w: grid.image_width,
            height: img_dims.0,
            width: img_dims.1,
        });
    }
    Ok(())
}

pub fn extract(img: &Image2D, grid: &PatchGrid) -> Result<Vec<Image2D>, PatchError> {
    check_grid(img.dims(), grid)?;
    let p = grid.patch_size;
    Ok(grid
        .positions
        .iter()
        .map(|&(r, c)| img.crop(r, c, p, p).expect("grid positions fit the image"))
        .collect())
}

/// Weighted average of overlapping patches:
/// `out(p) = sum_k w_k(p) * patch_k(p) / sum_k w_k(p)`.
///
/// Accumulation is in f64; the quotient is cast to f32.
pub fn assemble(
    patches: &[Image2D],
    grid: &PatchGrid,
    window: &WindowMap,
) -> Result<Image2D, PatchError> {
    let (num, den) = accumulate(patches, grid, window)?;
    let data = num.iter().zip(&den).map(|(n, d)| (n / d) as f32).collect();
    Ok(Image2D::from_vec(grid.image_height, grid.image_width, data).expect("grid dims"))
}

/// Numerator and weight accumulators of [`assemble`]; exposed so callers can
/// inspect coverage.
pub fn accumulate(
    patches: &[Image2D],
    grid: &PatchGrid,
    window: &WindowMap,
) -> Result<(Vec<f64>, Vec<f64>), PatchError> {
    if grid.is_empty() {
        return Err(PatchError::EmptyGrid);
    }
    if patches.len() != grid.len() {
        return Err(PatchError::CountMismatch { expected: grid.len(), got: patches.len() });
    }
    let p = grid.patch_size;
    if window.patch_size != p {
        return Err(PatchError::WindowMismatch { window: window.patch_size, patch_size: p });
    }
    for (index, patch) in patches.iter().enumerate() {
        if patch.dims() != (p, p) {
            return Err(PatchError::PatchShape {
                index,
                height: patch.height(),
                width: patch.width(),
                patch_size: p,
            });
        }
    }
    let w = grid.image_width;
    let mut num = vec![0.0f64; grid.image_height * w];
    let mut den = vec![0.0f64; grid.image_height * w];
    for (patch, &(r0, c0)) in patches.iter().zip(&grid.positions) {
        for pr in 0..p {
            let base = (r0 + pr) * w + c0;
            let wrow = &window.weights[pr * p..(pr + 1) * p];
            let prow = patch.row(pr);
            for ((n, d), (&wt, &v)) in num[base..base + p]
                .iter_mut()
                .zip(&mut den[base..base + p])
                .zip(wrow.iter().zip(prow))
            {
                *n += wt * f64::from(v);
                *d += wt;
            }
        }
    }
    Ok((num, den))
}

/// Runs `predict` over every patch of `img` and blends the results.
///
/// Images smaller than the patch are reflect-padded up to it and the output
/// is cropped back. Patches are predicted in parallel; blending order is fixed.
pub fn tiled_map<E, F>(
    img: &Image2D,
    patch_size: usize,
    stride: usize,
    window: &WindowMap,
    predict: F,
) -> Result<Image2D, E>
where
    E: From<PatchError> + Send,
    F: Fn(&Image2D) -> Result<Image2D, E> + Sync,
{
    let (h, w) = img.dims();
    let padded = img.reflect_pad_to(patch_size, patch_size);
    let grid = plan_grid(padded.height(), padded.width(), patch_size, stride)?;
    let inputs = extract(&padded, &grid)?;
    let outputs = inputs.par_iter().map(&predict).collect::<Result<Vec<_>, E>>()?;
    let blended = assemble(&outputs, &grid, window)?;
    if blended.dims() == (h, w) {
        Ok(blended)
    } else {
        Ok(blended.crop(0, 0, h, w).expect("padded image contains the original"))
    }
}
