//! Paired-dataset synthesis: run the trained degradation generator over a
//! corpus of clean HR images, producing aligned LR partners and a manifest.

use std::path::{Path, PathBuf};

use super::manifest::{PairEntry, PairManifest, PartnerRole};
use crate::error::{Error, Result};
use crate::image::{gaussian_plane, save_image, BitDepth, Image, NoiseSpec};
use crate::nn::{forward_h2l, NetworkKind, NetworkState};
use crate::seed::{self, tag};

pub struct GmsrOutcome {
    pub manifest: PairManifest,
    /// (path, reason) for inputs that could not be degraded.
    pub skipped: Vec<(PathBuf, String)>,
}

/// For every clean HR image, generate LR = degrade(HR, N) with a fresh
/// noise plane per image, writing LR PNGs under `out_dir/lr/`. Images whose
/// dimensions do not divide by the scale are skipped and reported, not
/// fatal. Paths in the returned manifest are absolute.
pub fn synthesize_gmsr(
    h2l: &NetworkState,
    hr_images: &[(PathBuf, Image)],
    noise_std: f64,
    gen_seed: u64,
    out_dir: &Path,
) -> Result<GmsrOutcome> {
    h2l.expect_kind(NetworkKind::H2lGen)?;
    let scale = h2l.spec.scale_factor;
    let lr_dir = out_dir.join("lr");
    std::fs::create_dir_all(&lr_dir)?;

    let mut manifest = PairManifest::new(scale);
    let mut skipped = Vec::new();
    for (i, (path, hr)) in hr_images.iter().enumerate() {
        let (_, h, w) = hr.data.dim();
        if h % scale != 0 || w % scale != 0 {
            skipped.push((
                path.clone(),
                format!("dimensions {h}x{w} not divisible by scale {scale}"),
            ));
            continue;
        }
        let spec = NoiseSpec {
            mean: 0.0,
            std_dev: noise_std,
            seed: seed::mix(gen_seed, &[tag::GMSR, i as u64]),
        };
        let noise = gaussian_plane(h, w, &spec)?;
        let lr = forward_h2l(h2l, hr, &noise)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("img_{i:04}"));
        let lr_path = lr_dir.join(format!("{stem}.png"));
        save_image(&lr, &lr_path, BitDepth::Sixteen)?;
        manifest.entries.push(PairEntry {
            hr_clean_path: absolute(path)?,
            partner_path: absolute(&lr_path)?,
            partner_role: PartnerRole::GeneratedLr,
            scene_id: stem,
        });
    }
    Ok(GmsrOutcome { manifest, skipped })
}

fn absolute(p: &Path) -> Result<PathBuf> {
    if p.is_absolute() {
        Ok(p.to_path_buf())
    } else {
        Ok(std::env::current_dir()?.join(p))
    }
}

/// Load every PNG in a directory, sorted by name.
pub fn load_hr_dir(dir: &Path) -> Result<Vec<(PathBuf, Image)>> {
    if !dir.is_dir() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|e| e == "png").unwrap_or(false))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| crate::image::load_image(&p).map(|img| (p, img)))
        .collect()
}
