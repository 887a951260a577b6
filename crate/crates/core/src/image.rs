//! Single-channel raster container and the pixel-level primitives used
//! throughout the pipeline: normalization, flips, elastic deformation,
//! resampling and reflect padding.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("data length {len} does not match {height}x{width}")]
    LengthMismatch { height: usize, width: usize, len: usize },
    #[error("image contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("image is empty")]
    Empty,
    #[error("elastic grid spacing must be at least 4 pixels, got {0}")]
    GridSpacing(usize),
    #[error("elastic magnitude must be finite and non-negative, got {0}")]
    Magnitude(f64),
    #[error("crop {rows}x{cols} at ({row}, {col}) exceeds image {height}x{width}")]
    CropOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
        height: usize,
        width: usize,
    },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// Row-major single-channel raster.
///
/// `f32` is the storage type for files and patches; losses and the model
/// work on `Image2D<f64>`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image2D<T = f32> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Copy> Image2D<T> {
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self, ImageError> {
        if data.len() != height * width {
            return Err(ImageError::LengthMismatch { height, width, len: data.len() });
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self { height, width, data: vec![value; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Image2D<U> {
        Image2D {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Image2D<U>) -> Result<(), ImageError> {
        if self.height != other.height || self.width != other.width {
            return Err(ImageError::DimensionMismatch(
                self.height,
                self.width,
                other.height,
                other.width,
            ));
        }
        Ok(())
    }

    /// Copies the `rows`x`cols` sub-rectangle anchored at (`row`, `col`).
    pub fn crop(&self, row: usize, col: usize, rows: usize, cols: usize) -> Result<Self, ImageError> {
        if row + rows > self.height || col + cols > self.width {
            return Err(ImageError::CropOutOfBounds {
                row,
                col,
                rows,
                cols,
                height: self.height,
                width: self.width,
            });
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in row..row + rows {
            let start = r * self.width + col;
            data.extend_from_slice(&self.data[start..start + cols]);
        }
        Ok(Self { height: rows, width: cols, data })
    }

    /// Pads to at least `min_height`x`min_width` by mirroring (edge pixel not
    /// repeated). Images already large enough are returned unchanged.
    pub fn reflect_pad_to(&self, min_height: usize, min_width: usize) -> Self {
        let h = self.height.max(min_height);
        let w = self.width.max(min_width);
        if h == self.height && w == self.width {
            return self.clone();
        }
        Image2D::from_fn(h, w, |r, c| {
            self.get(reflect_index(r as isize, self.height), reflect_index(c as isize, self.width))
        })
    }
}

impl Image2D<f32> {
    pub fn to_f64(&self) -> Image2D<f64> {
        self.map(f64::from)
    }

    pub fn check_finite(&self) -> Result<(), ImageError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(ImageError::NonFinite(i)),
            None => Ok(()),
        }
    }

    pub fn min_max(&self) -> Option<(f32, f32)> {
        let first = *self.data.first()?;
        Some(self.data.iter().fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v))))
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| f64::from(v)).sum::<f64>() / self.data.len() as f64
    }
}

impl Image2D<f64> {
    pub fn to_f32(&self) -> Image2D<f32> {
        self.map(|v| v as f32)
    }
}

/// Mirror index into `[0, n)` without repeating the edge sample
/// (`-1 -> 1`, `n -> n - 2`).
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    BrightField,
    PhaseContrast,
    Dic,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::BrightField, Modality::PhaseContrast, Modality::Dic];

    pub fn tag(self) -> &'static str {
        match self {
            Modality::BrightField => "BF",
            Modality::PhaseContrast => "PC",
            Modality::Dic => "DIC",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "BF" => Ok(Modality::BrightField),
            "PC" => Ok(Modality::PhaseContrast),
            "DIC" => Ok(Modality::Dic),
            other => Err(format!("unknown modality {other:?} (expected BF, PC or DIC)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Organelle {
    Nucleus,
    Mitochondria,
    Tubulin,
    Actin,
}

impl Organelle {
    pub const ALL: [Organelle; 4] =
        [Organelle::Nucleus, Organelle::Mitochondria, Organelle::Tubulin, Organelle::Actin];

    pub fn name(self) -> &'static str {
        match self {
            Organelle::Nucleus => "nucleus",
            Organelle::Mitochondria => "mitochondria",
            Organelle::Tubulin => "tubulin",
            Organelle::Actin => "actin",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Organelle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Organelle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Organelle::ALL
            .into_iter()
            .find(|o| o.name() == lower)
            .ok_or_else(|| format!("unknown organelle {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleMeta {
    pub study_id: String,
    pub modality: Modality,
}

/// Affine map of the image onto [0, 1]. A constant image maps to all zeros.
pub fn normalize_min_max(img: &Image2D) -> Image2D {
    let Some((lo, hi)) = img.min_max() else {
        return img.clone();
    };
    if hi <= lo {
        return Image2D::filled(img.height(), img.width(), 0.0);
    }
    let lo = f64::from(lo);
    let range = f64::from(hi) - lo;
    img.map(|v| ((f64::from(v) - lo) / range).clamp(0.0, 1.0) as f32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlipAxis {
    /// Mirror columns: (r, c) -> (r, W-1-c).
    Horizontal,
    /// Mirror rows: (r, c) -> (H-1-r, c).
    Vertical,
}

pub fn flip<T: Copy>(img: &Image2D<T>, axis: FlipAxis) -> Image2D<T> {
    let (h, w) = img.dims();
    let mut data = Vec::with_capacity(img.len());
    match axis {
        FlipAxis::Horizontal => {
            for r in 0..h {
                data.extend(img.row(r).iter().rev());
            }
        }
        FlipAxis::Vertical => {
            for r in (0..h).rev() {
                data.extend_from_slice(img.row(r));
            }
        }
    }
    Image2D { height: h, width: w, data }
}

/// Bilinear sample at fractional (y, x) with mirrored borders.
#[inline]
pub fn sample_bilinear_reflect(img: &Image2D, y: f64, x: f64) -> f64 {
    let (h, w) = img.dims();
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let (y0, x0) = (y0 as isize, x0 as isize);
    let r0 = reflect_index(y0, h);
    let r1 = reflect_index(y0 + 1, h);
    let c0 = reflect_index(x0, w);
    let c1 = reflect_index(x0 + 1, w);
    let v00 = f64::from(img.get(r0, c0));
    let v01 = f64::from(img.get(r0, c1));
    let v10 = f64::from(img.get(r1, c0));
    let v11 = f64::from(img.get(r1, c1));
    let top = v00 * (1.0 - fx) + v01 * fx;
    let bottom = v10 * (1.0 - fx) + v11 * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Dense displacement field for an elastic warp: uniform random offsets on a
/// coarse lattice, bilinearly upsampled. Returns (dy, dx) per pixel.
fn elastic_field(
    height: usize,
    width: usize,
    seed: u64,
    spacing: usize,
    magnitude: f64,
) -> (Vec<f64>, Vec<f64>) {
    let nodes_y = (height.saturating_sub(1)).div_ceil(spacing) + 1;
    let nodes_x = (width.saturating_sub(1)).div_ceil(spacing) + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lattice = |_: usize| -> Vec<f64> {
        (0..nodes_y * nodes_x)
            .map(|_| {
                if magnitude == 0.0 {
                    0.0
                } else {
                    rng.random_range(-magnitude..=magnitude)
                }
            })
            .collect()
    };
    let ly = lattice(0);
    let lx = lattice(1);
    let upsample = |lat: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(height * width);
        for r in 0..height {
            let gy = r as f64 / spacing as f64;
            let iy = (gy.floor() as usize).min(nodes_y - 1);
            let iy1 = (iy + 1).min(nodes_y - 1);
            let fy = gy - iy as f64;
            for c in 0..width {
                let gx = c as f64 / spacing as f64;
                let ix = (gx.floor() as usize).min(nodes_x - 1);
                let ix1 = (ix + 1).min(nodes_x - 1);
                let fx = gx - ix as f64;
                let top = lat[iy * nodes_x + ix] * (1.0 - fx) + lat[iy * nodes_x + ix1] * fx;
                let bot = lat[iy1 * nodes_x + ix] * (1.0 - fx) + lat[iy1 * nodes_x + ix1] * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
        out
    };
    (upsample(&ly), upsample(&lx))
}

/// Seeded elastic deformation. Applying it with the same seed and parameters
/// to several same-sized images warps them identically.
pub fn elastic_transform(
    img: &Image2D,
    seed: u64,
    grid_spacing: usize,
    magnitude: f64,
) -> Result<Image2D, ImageError> {
    if grid_spacing < 4 {
        return Err(ImageError::GridSpacing(grid_spacing));
    }
    if !magnitude.is_finite() || magnitude < 0.0 {
        return Err(ImageError::Magnitude(magnitude));
    }
    if img.is_empty() {
        return Ok(img.clone());
    }
    let (h, w) = img.dims();
    let (dy, dx) = elastic_field(h, w, seed, grid_spacing, magnitude);
    Ok(Image2D::from_fn(h, w, |r, c| {
        let i = r * w + c;
        sample_bilinear_reflect(img, r as f64 + dy[i], c as f64 + dx[i]) as f32
    }))
}

/// Bilinear resize with align-corners sampling.
pub fn resize_bilinear(img: &Image2D, height: usize, width: usize) -> Image2D {
    let (h, w) = img.dims();
    let scale = |n_out: usize, n_in: usize| {
        if n_out > 1 {
            (n_in - 1) as f64 / (n_out - 1) as f64
        } else {
            0.0
        }
    };
    let sy = scale(height, h);
    let sx = scale(width, w);
    Image2D::from_fn(height, width, |r, c| {
        sample_bilinear_reflect(img, r as f64 * sy, c as f64 * sx) as f32
    })
}

/// Normalized 1-D Gaussian kernel of odd length `size`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur with mirrored borders.
pub fn gaussian_blur(img: &Image2D<f64>, sigma: f64) -> Image2D<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let kernel = gaussian_kernel(2 * radius + 1, sigma);
    let (h, w) = img.dims();
    let r = radius as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        let row = img.row(y);
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * row[reflect_index(x as isize + k as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for (k, &kv) in kernel.iter().enumerate() {
            let src = reflect_index(y as isize + k as isize - r, h);
            let src_row = &tmp[src * w..(src + 1) * w];
            for (o, &s) in out[y * w..(y + 1) * w].iter_mut().zip(src_row) {
                *o += kv * s;
            }
        }
    }
    Image2D { height: h, width: w, data: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn img(h: usize, w: usize, v: &[f32]) -> Image2D {
        Image2D::from_vec(h, w, v.to_vec()).unwrap()
    }

    fn random_image(h: usize, w: usize, seed: u64) -> Image2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image2D::from_fn(h, w, |_, _| rng.random::<f32>())
    }

    #[test]
    fn normalize_maps_min_and_max() {
        let out = normalize_min_max(&img(1, 3, &[2.0, 4.0, 6.0]));
        assert_eq!(out.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn normalize_constant_is_zero() {
        let out = normalize_min_max(&img(1, 3, &[5.0, 5.0, 5.0]));
        assert_eq!(out.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_sixteen_bit_ramp() {
        let ramp: Vec<f32> = (0..=65535u32).map(|v| v as f32).collect();
        let out = normalize_min_max(&img(1, ramp.len(), &ramp));
        let worst = out
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| (f64::from(v) - i as f64 / 65535.0).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn flip_reverses_row() {
        let out = flip(&img(1, 3, &[1.0, 2.0, 3.0]), FlipAxis::Horizontal);
        assert_eq!(out.data(), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn vertical_flip_matches_index_oracle() {
        let x = random_image(7, 5, 3);
        let out = flip(&x, FlipAxis::Vertical);
        for r in 0..7 {
            for c in 0..5 {
                assert_eq!(out.get(r, c), x.get(6 - r, c));
            }
        }
    }

    #[test]
    fn elastic_zero_magnitude_is_identity() {
        let x = random_image(33, 21, 9);
        for seed in [0, 1, 99] {
            assert_eq!(elastic_transform(&x, seed, 8, 0.0).unwrap(), x);
        }
    }

    #[test]
    fn elastic_is_deterministic() {
        let x = random_image(40, 40, 1);
        let a = elastic_transform(&x, 17, 8, 3.0).unwrap();
        let b = elastic_transform(&x, 17, 8, 3.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, x);
    }

    #[test]
    fn elastic_keeps_constant_image() {
        let x = Image2D::filled(30, 30, 0.37f32);
        let out = elastic_transform(&x, 5, 6, 10.0).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.37).abs() < 1e-6));
    }

    #[test]
    fn elastic_rejects_small_spacing() {
        let x = Image2D::filled(8, 8, 0.0f32);
        assert_eq!(elastic_transform(&x, 0, 3, 1.0), Err(ImageError::GridSpacing(3)));
    }

    #[test]
    fn reflect_index_mirrors_without_edge_repeat() {
        let got: Vec<usize> = (-3..7).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
    }

    #[test]
    fn reflect_pad_then_crop_restores() {
        let x = random_image(5, 6, 2);
        let padded = x.reflect_pad_to(16, 16);
        assert_eq!(padded.dims(), (16, 16));
        assert_eq!(padded.crop(0, 0, 5, 6).unwrap(), x);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(v in proptest::collection::vec(-1e3f32..1e3, 2..64)) {
            let x = img(1, v.len(), &v);
            let once = normalize_min_max(&x);
            let twice = normalize_min_max(&once);
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((a - b).abs() <= 1e-7);
            }
        }

        #[test]
        fn flip_preserves_multiset(seed in 0u64..1000, h in 1usize..9, w in 1usize..9) {
            let x = random_image(h, w, seed);
            for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
                let y = flip(&x, axis);
                prop_assert_eq!(&flip(&y, axis), &x);
                let mut a = x.data().to_vec();
                let mut b = y.data().to_vec();
                a.sort_by(f32::total_cmp);
                b.sort_by(f32::total_cmp);
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn elastic_preserves_range(seed in 0u64..1000, mag in 0.0f64..12.0) {
            let x = random_image(24, 19, seed);
            let (lo, hi) = x.min_max().unwrap();
            let y = elastic_transform(&x, seed, 5, mag).unwrap();
            let (ylo, yhi) = y.min_max().unwrap();
            prop_assert!(ylo >= lo - 1e-6 && yhi <= hi + 1e-6);
        }
    }
}
