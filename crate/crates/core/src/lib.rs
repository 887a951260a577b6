//! Virtual staining toolkit: predicts fluorescence organelle channels from
//! label-free transmitted-light images with a patch-based encoder-decoder.

pub mod gradcheck;
pub mod image;
pub mod imageio;
pub mod objective;
pub mod patcher;
pub mod model;
pub mod trainer;
pub mod synth;
pub mod metrics;
pub mod cli;
