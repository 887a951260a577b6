//! Image files.
//!
//! The native format (`.lmci`) is:
//!
//! ```text
//! b"LMC1" | version: u32 LE (=1) | height: u32 LE | width: u32 LE | height*width f32 LE, row-major
//! ```
//!
//! Binary PGM (`P5`, 8- or 16-bit big-endian samples) can be imported; samples
//! are divided by the declared maxval.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::image::Image2D;

pub const LMCI_MAGIC: &[u8; 4] = b"LMC1";
pub const LMCI_VERSION: u32 = 1;
const LMCI_HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("unrecognized magic bytes {0:?}")]
    BadMagic(Vec<u8>),
    #[error("unsupported LMCI version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("image dimensions {height}x{width} overflow")]
    DimensionOverflow { height: u64, width: u64 },
    #[error("malformed PGM header: {0}")]
    PgmHeader(String),
    #[error("image contains non-finite value at index {0}")]
    NonFinite(usize),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ImageIoError + '_ {
    move |source| ImageIoError::Io { path: path.display().to_string(), source }
}

/// Encodes an image in the native format.
pub fn encode_lmci(img: &Image2D) -> Vec<u8> {
    let mut out = Vec::with_capacity(LMCI_HEADER_LEN + 4 * img.len());
    out.extend_from_slice(LMCI_MAGIC);
    out.extend_from_slice(&LMCI_VERSION.to_le_bytes());
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    for v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub fn decode_lmci(bytes: &[u8]) -> Result<Image2D, ImageIoError> {
    if bytes.len() < 4 || &bytes[..4] != LMCI_MAGIC {
        return Err(ImageIoError::BadMagic(bytes[..bytes.len().min(4)].to_vec()));
    }
    if bytes.len() < LMCI_HEADER_LEN {
        return Err(ImageIoError::Truncated { expected: LMCI_HEADER_LEN, found: bytes.len() });
    }
    let version = read_u32(bytes, 4);
    if version != LMCI_VERSION {
        return Err(ImageIoError::UnsupportedVersion(version));
    }
    let height = read_u32(bytes, 8);
    let width = read_u32(bytes, 12);
    let payload = (height as usize)
        .checked_mul(width as usize)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(LMCI_HEADER_LEN))
        .ok_or(ImageIoError::DimensionOverflow { height: height.into(), width: width.into() })?;
    if bytes.len() < payload {
        return Err(ImageIoError::Truncated { expected: payload, found: bytes.len() });
    }
    let data: Vec<f32> = bytes[LMCI_HEADER_LEN..payload]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(ImageIoError::NonFinite(i));
    }
    Ok(Image2D::from_vec(height as usize, width as usize, data).expect("length checked"))
}

struct PgmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PgmCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u64, ImageIoError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageIoError::PgmHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| ImageIoError::PgmHeader(format!("{what} out of range")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image2D, ImageIoError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(ImageIoError::BadMagic(bytes[..bytes.len().min(2)].to_vec()));
    }
    let mut cur = PgmCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(ImageIoError::PgmHeader(format!("maxval {maxval} outside 1..=65535")));
    }
    // exactly one whitespace byte separates the header from the raster
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(ImageIoError::PgmHeader("missing separator after maxval".into()));
    }
    let start = cur.pos + 1;
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let count = usize::try_from(height)
        .ok()
        .zip(usize::try_from(width).ok())
        .and_then(|(h, w)| h.checked_mul(w))
        .filter(|&n| n.checked_mul(sample_bytes).is_some())
        .ok_or(ImageIoError::DimensionOverflow { height, width })?;
    let expected = count * sample_bytes;
    let found = bytes.len() - start;
    if found < expected {
        return Err(ImageIoError::Truncated { expected, found });
    }
    let raster = &bytes[start..start + expected];
    let scale = maxval as f64;
    let data: Vec<f32> = if sample_bytes == 1 {
        raster.iter().map(|&b| (f64::from(b) / scale) as f32).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| (f64::from(u16::from_be_bytes([c[0], c[1]])) / scale) as f32)
            .collect()
    };
    Ok(Image2D::from_vec(height as usize, width as usize, data).expect("length checked"))
}

/// Reads an LMCI or binary PGM file, chosen by its magic bytes.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image2D, ImageIoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else {
        decode_lmci(&bytes)
    }
}

/// Writes the native format, creating parent directories as needed.
pub fn write_image(path: impl AsRef<Path>, img: &Image2D) -> Result<(), ImageIoError> {
    let path = path.as_ref();
    if let Some(i) = img.data().iter().position(|v| !v.is_finite()) {
        return Err(ImageIoError::NonFinite(i));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&encode_lmci(img)).map_err(io_err(path))
}

/// 8-bit PGM export for viewing; values are clamped to [0, 1].
pub fn write_pgm8(path: impl AsRef<Path>, img: &Image2D) -> Result<(), ImageIoError> {
    let path = path.as_ref();
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, out).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lmci_round_trip_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.lmci");
        let img = Image2D::from_vec(3, 2, vec![0.0, 1.5, -2.25, 3.0e-8, 7.0, 0.1]).unwrap();
        write_image(&path, &img).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);
    }

    #[test]
    fn lmci_header_layout() {
        let img = Image2D::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let bytes = encode_lmci(&img);
        assert_eq!(&bytes[..4], b"LMC1");
        assert_eq!(&bytes[4..16], &[1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 24);
    }

    #[test]
    fn lmci_errors_are_distinct() {
        let good = encode_lmci(&Image2D::filled(2, 2, 0.5));
        assert!(matches!(decode_lmci(b"NOPE0000"), Err(ImageIoError::BadMagic(_))));
        assert!(matches!(
            decode_lmci(&good[..good.len() - 1]),
            Err(ImageIoError::Truncated { expected: 32, found: 31 })
        ));
        let mut huge = good.clone();
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        let err = decode_lmci(&huge).unwrap_err();
        if cfg!(target_pointer_width = "64") {
            // u32::MAX^2 * 4 still overflows a 64-bit usize
            assert!(matches!(err, ImageIoError::DimensionOverflow { .. }), "{err}");
        }
        let mut v2 = good;
        v2[4] = 2;
        assert!(matches!(decode_lmci(&v2), Err(ImageIoError::UnsupportedVersion(2))));
    }

    #[test]
    fn pgm_8bit_maxval_division() {
        let mut bytes = b"P5\n# comment\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.dims(), (1, 2));
        assert_eq!(img.data(), &[1.0, 0.0]);
    }

    #[test]
    fn pgm_16bit_big_endian() {
        let mut bytes = b"P5 1 1 65535\n".to_vec();
        bytes.extend_from_slice(&32768u16.to_be_bytes());
        let img = decode_pgm(&bytes).unwrap();
        let expected = (32768.0f64 / 65535.0) as f32;
        assert_eq!(img.data()[0], expected);
        assert!((img.data()[0] - 0.500_007_63).abs() < 1e-7);
    }

    #[test]
    fn pgm_truncated() {
        let bytes = b"P5 4 4 255\n\x00\x01".to_vec();
        assert!(matches!(
            decode_pgm(&bytes),
            Err(ImageIoError::Truncated { expected: 16, found: 2 })
        ));
    }

    #[test]
    fn pgm_export_reimports() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let img = Image2D::from_vec(1, 3, vec![0.0, 1.0, 2.0]).unwrap();
        write_pgm8(&path, &img).unwrap();
        assert_eq!(read_image(&path).unwrap().data(), &[0.0, 1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn lmci_round_trip_is_bit_exact(
            h in 1usize..6,
            w in 1usize..6,
            seed in proptest::collection::vec(-1e30f32..1e30, 36),
        ) {
            let img = Image2D::from_vec(h, w, seed[..h * w].to_vec()).unwrap();
            let back = decode_lmci(&encode_lmci(&img)).unwrap();
            let same = img.data().iter().zip(back.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }
}
