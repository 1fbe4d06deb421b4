//! Dual-GAN super-resolution pipeline: a degradation generator that learns
//! a realistic noise prior, an RRDB super-resolution generator, the loss
//! stack and staged training engine, paired-dataset synthesis, and a
//! Y-channel PSNR/SSIM evaluation harness.

pub mod data;
pub mod error;
pub mod eval;
pub mod image;
pub mod losses;
pub mod nn;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
