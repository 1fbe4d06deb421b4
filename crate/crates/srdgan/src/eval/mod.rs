//! Quality metrics and the benchmark/inference harness.

pub mod infer;
pub mod metrics;
pub mod runner;

pub use infer::{sr_infer, sr_infer_dir, TileOptions};
pub use metrics::{psnr, psnr_with_mode, ssim, ssim_with_mode, MetricMode};
pub use runner::{evaluate_dir, MetricResult, PerImageMetrics};
