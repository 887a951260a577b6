//! Loading, normalizing and augmenting an image, and the LMCI file format.
//!
//! cargo run --example preprocess

use std::error::Error;

use vstain::image::{elastic_transform, flip, normalize_min_max, FlipAxis, Image2D};
use vstain::imageio::{decode_lmci, encode_lmci, write_pgm8};

fn main() -> Result<(), Box<dyn Error>> {
    // A 12-bit style raw image: gradient plus a bright square.
    let raw = Image2D::from_fn(96, 128, |r, c| {
        let square = if (30..60).contains(&r) && (40..80).contains(&c) { 1500.0 } else { 0.0 };
        200.0 + 10.0 * c as f32 + square
    });
    let (lo, hi) = raw.min_max().expect("non-empty");
    let norm = normalize_min_max(&raw);
    let (nlo, nhi) = norm.min_max().expect("non-empty");
    println!("raw range [{lo}, {hi}] -> normalized [{nlo}, {nhi}]");

    let flipped = flip(&norm, FlipAxis::Horizontal);
    assert_eq!(flipped.get(0, 0), norm.get(0, 127));
    assert_eq!(flip(&flipped, FlipAxis::Horizontal), norm);
    println!("horizontal flip is an involution");

    // The same seed warps any same-sized image identically, which is how an
    // input and its targets stay aligned.
    let warped = elastic_transform(&norm, 42, 16, 4.0)?;
    let again = elastic_transform(&norm, 42, 16, 4.0)?;
    assert_eq!(warped, again);
    let moved = warped.data().iter().zip(norm.data()).filter(|(a, b)| (*a - *b).abs() > 1e-3).count();
    println!("elastic warp changed {moved} of {} pixels", norm.len());

    let bytes = encode_lmci(&warped);
    assert_eq!(decode_lmci(&bytes)?, warped);
    println!("LMCI round trip of {} bytes is exact", bytes.len());

    let out = std::env::temp_dir().join("vstain-preprocess");
    write_pgm8(out.join("normalized.pgm"), &norm)?;
    write_pgm8(out.join("warped.pgm"), &warped)?;
    println!("8-bit previews in {}", out.display());
    Ok(())
}
