//! PSNR and SSIM on the luma channel (full-RGB mode available for
//! ablations). PSNR is capped at 100 dB so identical images keep
//! aggregates finite. SSIM uses the standard 11x11 Gaussian window with
//! sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1.0, valid windows only.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::image::{rgb_to_y, ColorSpace, Image};

pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricMode {
    /// BT.601 luma (the evaluation default).
    YChannel,
    /// Metrics over all RGB channels.
    Rgb,
}

fn to_planes(img: &Image, mode: MetricMode) -> Result<Vec<Array2<f64>>> {
    match (mode, img.color_space) {
        (MetricMode::YChannel, ColorSpace::Rgb) => {
            let y = rgb_to_y(img)?;
            Ok(vec![y.data.index_axis(ndarray::Axis(0), 0).to_owned()])
        }
        (MetricMode::YChannel, ColorSpace::Y) => {
            Ok(vec![img.data.index_axis(ndarray::Axis(0), 0).to_owned()])
        }
        (MetricMode::Rgb, _) => Ok((0..img.channels())
            .map(|c| img.data.index_axis(ndarray::Axis(0), c).to_owned())
            .collect()),
    }
}

fn check_shapes(a: &Image, b: &Image) -> Result<()> {
    if a.data.dim() != b.data.dim() {
        return Err(Error::dimension(format!(
            "metric shape mismatch: {:?} vs {:?}",
            a.data.dim(),
            b.data.dim()
        )));
    }
    Ok(())
}

pub fn psnr_with_mode(a: &Image, b: &Image, mode: MetricMode) -> Result<f64> {
    check_shapes(a, b)?;
    let pa = to_planes(a, mode)?;
    let pb = to_planes(b, mode)?;
    let mut acc = 0.0;
    let mut n = 0usize;
    for (x, y) in pa.iter().zip(pb.iter()) {
        acc += x.iter().zip(y.iter()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        n += x.len();
    }
    let mse = acc / n as f64;
    if mse <= 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Y-channel PSNR in dB for [0,1] images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    psnr_with_mode(a, b, MetricMode::YChannel)
}

/// Normalized 1-D Gaussian taps for the SSIM window.
pub fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Valid-mode separable weighted filtering with the SSIM window.
fn filter_valid(x: &Array2<f64>, w: &[f64]) -> Array2<f64> {
    let (h, width) = x.dim();
    let k = w.len();
    let mut rows = Array2::zeros((h - k + 1, width));
    for i in 0..h - k + 1 {
        for j in 0..width {
            let mut acc = 0.0;
            for (t, wt) in w.iter().enumerate() {
                acc += wt * x[[i + t, j]];
            }
            rows[[i, j]] = acc;
        }
    }
    let mut out = Array2::zeros((h - k + 1, width - k + 1));
    for i in 0..h - k + 1 {
        for j in 0..width - k + 1 {
            let mut acc = 0.0;
            for (t, wt) in w.iter().enumerate() {
                acc += wt * rows[[i, j + t]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

fn ssim_plane(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let w = gaussian_window();
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let mu_x = filter_valid(x, &w);
    let mu_y = filter_valid(y, &w);
    let xx = filter_valid(&(x * x), &w);
    let yy = filter_valid(&(y * y), &w);
    let xy = filter_valid(&(x * y), &w);
    let mut acc = 0.0;
    let n = mu_x.len();
    for idx in 0..n {
        let (mx, my) = (mu_x.as_slice().unwrap()[idx], mu_y.as_slice().unwrap()[idx]);
        let sx = xx.as_slice().unwrap()[idx] - mx * mx;
        let sy = yy.as_slice().unwrap()[idx] - my * my;
        let sxy = xy.as_slice().unwrap()[idx] - mx * my;
        let v = ((2.0 * mx * my + c1) * (2.0 * sxy + c2))
            / ((mx * mx + my * my + c1) * (sx + sy + c2));
        acc += v;
    }
    acc / n as f64
}

pub fn ssim_with_mode(a: &Image, b: &Image, mode: MetricMode) -> Result<f64> {
    check_shapes(a, b)?;
    let (_, h, w) = a.data.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::dimension(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let pa = to_planes(a, mode)?;
    let pb = to_planes(b, mode)?;
    let vals: Vec<f64> = pa.iter().zip(pb.iter()).map(|(x, y)| ssim_plane(x, y)).collect();
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Y-channel mean structural similarity.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_with_mode(a, b, MetricMode::YChannel)
}
