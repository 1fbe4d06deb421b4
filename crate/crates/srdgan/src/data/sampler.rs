//! Batched patch sampling with exact LR/HR alignment: HR crop offsets snap
//! to multiples of the scale factor so every LR pixel corresponds to a
//! whole HR block. The whole pipeline is a pure function of
//! (manifest, options, seed).

use std::cell::RefCell;
use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::{s, Array4};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::manifest::{PairManifest, PartnerRole};
use crate::error::{Error, Result};
use crate::image::{crop_at, load_image, nearest_downsample, Image};
use crate::losses::Stage;
use crate::seed::{self, tag};

/// One training batch. `lr` spatial dims times the scale equal `hr` dims.
/// For the degradation stage, `noise` carries the Gaussian input planes and
/// `unpaired` the GAN-real crops.
#[derive(Debug, Clone)]
pub struct Batch {
    pub hr: Array4<f64>,
    pub lr: Array4<f64>,
    pub noise: Option<Array4<f64>>,
    pub unpaired: Option<Array4<f64>>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SampleOptions {
    /// Std of the Gaussian noise plane fed to the degradation generator.
    pub noise_std: f64,
    /// Fraction of SR-stage samples drawn from generated-LR entries when
    /// both generated and clean-pair pools exist.
    pub mix_ratio: f64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions { noise_std: 0.05, mix_ratio: 0.5 }
    }
}

/// Manifest-backed sampler with an image cache. The cache only memoizes
/// decoded files; sampling stays a pure function of (manifest, seed).
pub struct Sampler {
    manifest: PairManifest,
    base: PathBuf,
    options: SampleOptions,
    cache: RefCell<HashMap<PathBuf, Image>>,
}

impl Sampler {
    pub fn new(manifest: PairManifest, base: impl AsRef<Path>, options: SampleOptions) -> Self {
        Sampler {
            manifest,
            base: base.as_ref().to_path_buf(),
            options,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn manifest(&self) -> &PairManifest {
        &self.manifest
    }

    fn image(&self, rel: &Path) -> Result<Image> {
        let full = self.base.join(rel);
        if let Some(img) = self.cache.borrow().get(&full) {
            return Ok(img.clone());
        }
        let img = load_image(&full)?;
        self.cache.borrow_mut().insert(full, img.clone());
        Ok(img)
    }

    /// Draw a batch. `patch_size` is in HR pixels and must be divisible by
    /// the manifest scale factor.
    pub fn sample(
        &self,
        batch_size: usize,
        patch_size: usize,
        stage: Stage,
        batch_seed: u64,
    ) -> Result<Batch> {
        let scale = self.manifest.scale_factor;
        if batch_size == 0 {
            return Err(Error::Argument("batch_size must be >= 1".into()));
        }
        if patch_size % scale != 0 {
            return Err(Error::dimension(format!(
                "patch size {patch_size} not divisible by scale {scale}"
            )));
        }
        let lr_patch = patch_size / scale;

        let paired: Vec<usize> = self
            .manifest
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.partner_role == PartnerRole::NoisyHr)
            .map(|(i, _)| i)
            .collect();
        let generated: Vec<usize> = self
            .manifest
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.partner_role == PartnerRole::GeneratedLr)
            .map(|(i, _)| i)
            .collect();
        let unpaired: Vec<usize> = self
            .manifest
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.partner_role == PartnerRole::UnpairedNoisy)
            .map(|(i, _)| i)
            .collect();

        let needs_pairs = match stage {
            Stage::H2l | Stage::Joint => !paired.is_empty(),
            Stage::L2h => !paired.is_empty() || !generated.is_empty(),
        };
        if !needs_pairs {
            return Err(Error::Validation {
                issues: vec![format!("manifest has no usable entries for stage {stage}")],
            });
        }

        let mut hr = Array4::zeros((batch_size, 3, patch_size, patch_size));
        let mut lr = Array4::zeros((batch_size, 3, lr_patch, lr_patch));
        let degradation_stage = matches!(stage, Stage::H2l | Stage::Joint);
        let mut noise = if degradation_stage {
            Some(Array4::zeros((batch_size, 1, patch_size, patch_size)))
        } else {
            None
        };
        let mut unpaired_batch = if degradation_stage && !unpaired.is_empty() {
            Some(Array4::zeros((batch_size, 3, lr_patch, lr_patch)))
        } else {
            None
        };
        let mut seeds = Vec::with_capacity(batch_size);

        for b in 0..batch_size {
            let sample_seed = seed::mix(batch_seed, &[tag::BATCH, b as u64]);
            seeds.push(sample_seed);
            let mut rng = seed::rng(sample_seed);

            let entry_idx = match stage {
                Stage::H2l | Stage::Joint => paired[rng.gen_range(0..paired.len())],
                Stage::L2h => {
                    if generated.is_empty() {
                        paired[rng.gen_range(0..paired.len())]
                    } else if paired.is_empty() {
                        generated[rng.gen_range(0..generated.len())]
                    } else if rng.gen_range(0.0..1.0) < self.options.mix_ratio {
                        generated[rng.gen_range(0..generated.len())]
                    } else {
                        paired[rng.gen_range(0..paired.len())]
                    }
                }
            };
            let entry = &self.manifest.entries[entry_idx];
            let hr_img = self.image(&entry.hr_clean_path)?;
            let (_, ih, iw) = hr_img.data.dim();
            if patch_size > ih || patch_size > iw {
                return Err(Error::dimension(format!(
                    "patch {patch_size} larger than image {ih}x{iw} ({})",
                    entry.hr_clean_path.display()
                )));
            }
            // offsets snapped to multiples of the scale factor
            let max_r = (ih - patch_size) / scale;
            let max_c = (iw - patch_size) / scale;
            let r = rng.gen_range(0..=max_r) * scale;
            let c = rng.gen_range(0..=max_c) * scale;
            let hr_patch = crop_at(&hr_img, r, c, patch_size, patch_size)?;
            hr.slice_mut(s![b, .., .., ..]).assign(&hr_patch.data);

            let lr_patch_img = match entry.partner_role {
                PartnerRole::NoisyHr => {
                    let partner = if entry.partner_path == entry.hr_clean_path {
                        hr_img.clone()
                    } else {
                        self.image(&entry.partner_path)?
                    };
                    let noisy_patch = crop_at(&partner, r, c, patch_size, patch_size)?;
                    nearest_downsample(&noisy_patch, scale)?
                }
                PartnerRole::GeneratedLr => {
                    let partner = self.image(&entry.partner_path)?;
                    crop_at(&partner, r / scale, c / scale, lr_patch, lr_patch)?
                }
                PartnerRole::UnpairedNoisy => unreachable!("pools exclude unpaired"),
            };
            lr.slice_mut(s![b, .., .., ..]).assign(&lr_patch_img.data);

            if let Some(noise_planes) = noise.as_mut() {
                let normal = Normal::new(0.0, self.options.noise_std)
                    .map_err(|e| Error::Argument(format!("bad noise std: {e}")))?;
                let mut nrng = seed::rng(seed::mix(sample_seed, &[tag::NOISE]));
                let mut plane = noise_planes.slice_mut(s![b, 0, .., ..]);
                for v in plane.iter_mut() {
                    *v = normal.sample(&mut nrng);
                }
            }

            if let Some(unpaired_planes) = unpaired_batch.as_mut() {
                let mut urng = seed::rng(seed::mix(sample_seed, &[tag::UNPAIRED]));
                let uentry = &self.manifest.entries[unpaired[urng.gen_range(0..unpaired.len())]];
                let uimg = self.image(&uentry.partner_path)?;
                let (_, uh, uw) = uimg.data.dim();
                if lr_patch > uh || lr_patch > uw {
                    return Err(Error::dimension(format!(
                        "unpaired crop {lr_patch} larger than {uh}x{uw} ({})",
                        uentry.partner_path.display()
                    )));
                }
                let ur = urng.gen_range(0..=uh - lr_patch);
                let uc = urng.gen_range(0..=uw - lr_patch);
                let crop = crop_at(&uimg, ur, uc, lr_patch, lr_patch)?;
                unpaired_planes.slice_mut(s![b, .., .., ..]).assign(&crop.data);
            }
        }

        Ok(Batch { hr, lr, noise, unpaired: unpaired_batch, seeds })
    }
}

/// One-shot convenience wrapper over `Sampler`.
pub fn sample_batch(
    manifest: &PairManifest,
    base: impl AsRef<Path>,
    batch_size: usize,
    patch_size: usize,
    stage: Stage,
    batch_seed: u64,
) -> Result<Batch> {
    Sampler::new(manifest.clone(), base, SampleOptions::default())
        .sample(batch_size, patch_size, stage, batch_seed)
}
