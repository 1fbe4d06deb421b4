//! Directory-vs-directory benchmark: match filenames, crop borders, report
//! per-image and mean PSNR/SSIM.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{psnr_with_mode, ssim_with_mode, MetricMode};
use crate::error::{Error, Result};
use crate::image::{crop_at, load_image, Image};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerImageMetrics {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricResult {
    pub psnr_db: f64,
    pub ssim: f64,
    pub per_image: Vec<PerImageMetrics>,
}

impl MetricResult {
    /// The Table-style "PSNR/SSIM" row.
    pub fn row(&self) -> String {
        format!("{:.2}/{:.4}", self.psnr_db, self.ssim)
    }
}

fn png_names(dir: &Path) -> Result<BTreeSet<String>> {
    if !dir.is_dir() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    Ok(std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|e| e == "png").unwrap_or(false))
        .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(|s| s.to_string()))
        .collect())
}

fn crop_border(img: &Image, border: usize) -> Result<Image> {
    if border == 0 {
        return Ok(img.clone());
    }
    let (_, h, w) = img.data.dim();
    if h <= 2 * border || w <= 2 * border {
        return Err(Error::dimension(format!(
            "border {border} leaves nothing of a {h}x{w} image"
        )));
    }
    crop_at(img, border, border, h - 2 * border, w - 2 * border)
}

/// Evaluate every matching PNG pair in (sr_dir, gt_dir). Unmatched
/// filenames on either side fail validation, naming each file.
pub fn evaluate_dir(
    sr_dir: &Path,
    gt_dir: &Path,
    border: usize,
    mode: MetricMode,
) -> Result<MetricResult> {
    let sr_names = png_names(sr_dir)?;
    let gt_names = png_names(gt_dir)?;
    let mut issues = Vec::new();
    for only_sr in sr_names.difference(&gt_names) {
        issues.push(format!("no ground truth for {only_sr}"));
    }
    for only_gt in gt_names.difference(&sr_names) {
        issues.push(format!("no SR output for {only_gt}"));
    }
    if !issues.is_empty() {
        return Err(Error::Validation { issues });
    }
    if sr_names.is_empty() {
        return Err(Error::Validation { issues: vec!["no PNG pairs to evaluate".into()] });
    }

    let mut per_image = Vec::with_capacity(sr_names.len());
    for name in &sr_names {
        let sr = crop_border(&load_image(sr_dir.join(name))?, border)?;
        let gt = crop_border(&load_image(gt_dir.join(name))?, border)?;
        per_image.push(PerImageMetrics {
            name: name.clone(),
            psnr: psnr_with_mode(&sr, &gt, mode)?,
            ssim: ssim_with_mode(&sr, &gt, mode)?,
        });
    }
    let n = per_image.len() as f64;
    Ok(MetricResult {
        psnr_db: per_image.iter().map(|p| p.psnr).sum::<f64>() / n,
        ssim: per_image.iter().map(|p| p.ssim).sum::<f64>() / n,
        per_image,
    })
}
