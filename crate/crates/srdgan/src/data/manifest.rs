//! Declarative listing of training pairs: clean HR images with a noisy
//! partner, a generated LR partner, or an unpaired noisy source.
//! Stored as versioned JSON; paths are kept relative to the manifest file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::load_image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartnerRole {
    /// Partner is a noisy frame at HR resolution; the LR training target is
    /// its nearest-neighbour downsample. A clean image may partner itself
    /// (partner_path == hr_clean_path) to form a clean nearest-pair.
    NoisyHr,
    /// Partner is an LR image produced by the degradation generator.
    GeneratedLr,
    /// Partner is an unpaired noisy image; only used for GAN-real crops.
    UnpairedNoisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub hr_clean_path: PathBuf,
    pub partner_path: PathBuf,
    pub partner_role: PartnerRole,
    pub scene_id: String,
}

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairManifest {
    pub version: u32,
    pub scale_factor: usize,
    pub entries: Vec<PairEntry>,
}

impl PairManifest {
    pub fn new(scale_factor: usize) -> Self {
        PairManifest { version: MANIFEST_VERSION, scale_factor, entries: Vec::new() }
    }

    pub fn entries_with_role(&self, role: PartnerRole) -> Vec<&PairEntry> {
        self.entries.iter().filter(|e| e.partner_role == role).collect()
    }

    /// Structural checks plus file existence and dimension consistency.
    /// `base` is the directory relative paths resolve against.
    pub fn validate(&self, base: &Path) -> Result<()> {
        let mut issues = Vec::new();
        let mut seen: HashSet<PathBuf> = HashSet::new();
        for (i, entry) in self.entries.iter().enumerate() {
            let hr = base.join(&entry.hr_clean_path);
            let partner = base.join(&entry.partner_path);
            let self_pair = entry.hr_clean_path == entry.partner_path;
            if self_pair && entry.partner_role != PartnerRole::NoisyHr {
                issues.push(format!(
                    "entry {i}: partner may equal the clean path only for noisy_hr"
                ));
            }
            for p in [&entry.hr_clean_path, &entry.partner_path] {
                if !self_pair || p == &entry.hr_clean_path {
                    if !seen.insert(p.clone()) {
                        issues.push(format!("entry {i}: path listed twice: {}", p.display()));
                    }
                }
            }
            let hr_img = match load_image(&hr) {
                Ok(img) => Some(img),
                Err(_) => {
                    issues.push(format!("entry {i}: missing or unreadable: {}", hr.display()));
                    None
                }
            };
            let partner_img = if self_pair {
                hr_img.clone()
            } else {
                match load_image(&partner) {
                    Ok(img) => Some(img),
                    Err(_) => {
                        issues.push(format!(
                            "entry {i}: missing or unreadable: {}",
                            partner.display()
                        ));
                        None
                    }
                }
            };
            if let (Some(h), Some(p)) = (&hr_img, &partner_img) {
                match entry.partner_role {
                    PartnerRole::NoisyHr => {
                        if h.data.dim() != p.data.dim() {
                            issues.push(format!(
                                "entry {i}: noisy partner dims {:?} differ from clean {:?}",
                                p.data.dim(),
                                h.data.dim()
                            ));
                        }
                    }
                    PartnerRole::GeneratedLr => {
                        let (_, hh, hw) = h.data.dim();
                        let (_, ph, pw) = p.data.dim();
                        if hh != ph * self.scale_factor || hw != pw * self.scale_factor {
                            issues.push(format!(
                                "entry {i}: generated LR dims {ph}x{pw} are not clean/{}",
                                self.scale_factor
                            ));
                        }
                    }
                    PartnerRole::UnpairedNoisy => {}
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation { issues })
        }
    }
}

pub fn save_manifest(manifest: &PairManifest, path: impl AsRef<Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::format(e.to_string()))?;
    std::fs::write(path.as_ref(), json)?;
    Ok(())
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<PairManifest> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let raw = std::fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&raw).map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::format(format!("{}: missing version field", path.display())))?;
    if version != MANIFEST_VERSION as u64 {
        return Err(Error::format(format!(
            "{}: unsupported manifest version {version} (expected {MANIFEST_VERSION})",
            path.display()
        )));
    }
    serde_json::from_value(value).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

/// Partition by scene so scene_ids never straddle splits. Fractions are
/// (train, val); the remainder is test. Deterministic in the seed.
pub fn split_by_scene(
    manifest: &PairManifest,
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> (PairManifest, PairManifest, PairManifest) {
    use rand::seq::SliceRandom;
    let mut scenes: Vec<String> = Vec::new();
    for e in &manifest.entries {
        if !scenes.contains(&e.scene_id) {
            scenes.push(e.scene_id.clone());
        }
    }
    let mut rng = crate::seed::rng(crate::seed::mix(seed, &[crate::seed::tag::ENTRY_PICK]));
    scenes.shuffle(&mut rng);
    let n = scenes.len();
    let n_train = (n as f64 * train_frac).round() as usize;
    let n_val = (n as f64 * val_frac).round() as usize;
    let train_set: HashSet<_> = scenes.iter().take(n_train).cloned().collect();
    let val_set: HashSet<_> = scenes.iter().skip(n_train).take(n_val).cloned().collect();
    let mut parts = [
        PairManifest::new(manifest.scale_factor),
        PairManifest::new(manifest.scale_factor),
        PairManifest::new(manifest.scale_factor),
    ];
    for e in &manifest.entries {
        let idx = if train_set.contains(&e.scene_id) {
            0
        } else if val_set.contains(&e.scene_id) {
            1
        } else {
            2
        };
        parts[idx].entries.push(e.clone());
    }
    let [train, val, test] = parts;
    (train, val, test)
}
