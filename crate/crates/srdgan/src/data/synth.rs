//! Synthetic burst-noise corpus: procedurally generated clean scenes, each
//! observed through a burst of signal-dependent noisy frames. The burst
//! mean stands in for the multi-frame-denoised clean capture; one held-out
//! frame becomes the noisy partner. A disjoint set of scenes is emitted as
//! unpaired noisy data for the GAN. The degradation model never sees the
//! noise parameters, only the images.

use std::path::Path;

use ndarray::Array3;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::manifest::{PairEntry, PairManifest, PartnerRole};
use crate::error::{Error, Result};
use crate::image::{save_image, BitDepth, ColorSpace, Image};
use crate::seed::{self, tag};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Paired scenes (burst + mean + held-out noisy frame).
    pub n_scenes: usize,
    /// Additional scenes emitted as unpaired noisy images.
    pub n_unpaired: usize,
    pub image_size: usize,
    pub burst_size: usize,
    /// Noise model sigma(x) = sigma_read + sigma_shot * x.
    pub sigma_read: f64,
    pub sigma_shot: f64,
    /// Which burst frame becomes the noisy partner.
    pub holdout_index: usize,
    pub scale_factor: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_scenes: 8,
            n_unpaired: 4,
            image_size: 96,
            burst_size: 8,
            sigma_read: 0.02,
            sigma_shot: 0.06,
            holdout_index: 0,
            scale_factor: 4,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burst_size < 2 {
            return Err(Error::Argument("burst_size must be >= 2".into()));
        }
        if self.n_scenes == 0 {
            return Err(Error::Argument("n_scenes must be >= 1".into()));
        }
        if self.holdout_index >= self.burst_size {
            return Err(Error::Argument("holdout_index must be < burst_size".into()));
        }
        if self.image_size % self.scale_factor != 0 {
            return Err(Error::Argument(
                "image_size must be divisible by scale_factor".into(),
            ));
        }
        Ok(())
    }
}

/// Band-limited random field plus random rectangles and disks, so both
/// smooth regions and hard edges exist. Values stay inside [0.1, 0.9] so
/// noise has room before clamping.
pub fn procedural_scene(size: usize, scene_seed: u64) -> Image {
    let mut rng = seed::rng(scene_seed);
    let mut data = Array3::<f64>::zeros((3, size, size));

    // low-frequency cosine mixture, shared phase structure across channels
    let n_waves = 4;
    let waves: Vec<(f64, f64, f64, [f64; 3])> = (0..n_waves)
        .map(|_| {
            let fx: f64 = rng.gen_range(0.5..3.0);
            let fy: f64 = rng.gen_range(0.5..3.0);
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let amps = [
                rng.gen_range(0.05..0.18),
                rng.gen_range(0.05..0.18),
                rng.gen_range(0.05..0.18),
            ];
            (fx, fy, phase, amps)
        })
        .collect();
    for c in 0..3 {
        for i in 0..size {
            for j in 0..size {
                let (u, v) = (i as f64 / size as f64, j as f64 / size as f64);
                let mut val = 0.5;
                for (fx, fy, phase, amps) in &waves {
                    val += amps[c]
                        * (std::f64::consts::TAU * (fx * u + fy * v) + phase).cos();
                }
                data[[c, i, j]] = val;
            }
        }
    }

    // geometric primitives: filled rectangles and disks
    let n_shapes = rng.gen_range(3..7);
    for _ in 0..n_shapes {
        let color = [
            rng.gen_range(0.15..0.85),
            rng.gen_range(0.15..0.85),
            rng.gen_range(0.15..0.85),
        ];
        if rng.gen_bool(0.5) {
            let h = rng.gen_range(size / 8..size / 2);
            let w = rng.gen_range(size / 8..size / 2);
            let r0 = rng.gen_range(0..size - h);
            let c0 = rng.gen_range(0..size - w);
            for c in 0..3 {
                for i in r0..r0 + h {
                    for j in c0..c0 + w {
                        data[[c, i, j]] = color[c];
                    }
                }
            }
        } else {
            let rad = rng.gen_range(size / 10..size / 4) as i64;
            let cy = rng.gen_range(0..size) as i64;
            let cx = rng.gen_range(0..size) as i64;
            for c in 0..3 {
                for i in 0..size as i64 {
                    for j in 0..size as i64 {
                        if (i - cy).pow(2) + (j - cx).pow(2) <= rad * rad {
                            data[[c, i as usize, j as usize]] = color[c];
                        }
                    }
                }
            }
        }
    }

    data.mapv_inplace(|v| v.clamp(0.1, 0.9));
    Image::new(data, ColorSpace::Rgb)
        .expect("scene values clamped into range")
        .with_provenance(format!("procedural:{scene_seed}"))
}

/// One noisy observation of a clean scene under the signal-dependent model
/// sigma(x) = sigma_read + sigma_shot * x, clamped to [0,1].
pub fn noisy_realization(clean: &Image, sigma_read: f64, sigma_shot: f64, frame_seed: u64) -> Image {
    let mut rng = seed::rng(frame_seed);
    let mut data = clean.data.clone();
    for v in data.iter_mut() {
        let sigma = sigma_read + sigma_shot * *v;
        let n: f64 = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
        *v = (*v + sigma * n).clamp(0.0, 1.0);
    }
    Image::new(data, ColorSpace::Rgb)
        .expect("clamped")
        .with_provenance(format!("{}+noise", clean.provenance))
}

/// Generate the corpus on disk and return its manifest (paths relative to
/// `out_dir`, where the manifest itself is also written as manifest.json).
pub fn synth_burst_corpus(config: &SynthConfig, corpus_seed: u64, out_dir: &Path) -> Result<PairManifest> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = PairManifest::new(config.scale_factor);

    for s in 0..config.n_scenes {
        let scene_id = format!("scene_{s:04}");
        let scene_dir = out_dir.join(&scene_id);
        std::fs::create_dir_all(&scene_dir)?;
        let scene_seed = seed::mix(corpus_seed, &[tag::SCENE, s as u64]);
        let clean = procedural_scene(config.image_size, scene_seed);

        let mut mean = Array3::<f64>::zeros(clean.data.raw_dim());
        for b in 0..config.burst_size {
            let frame_seed = seed::mix(corpus_seed, &[tag::BURST, s as u64, b as u64]);
            let frame = noisy_realization(&clean, config.sigma_read, config.sigma_shot, frame_seed);
            mean += &frame.data;
            save_image(
                &frame,
                scene_dir.join(format!("hr_noisy_{b:03}.png")),
                BitDepth::Sixteen,
            )?;
        }
        mean /= config.burst_size as f64;
        let hr_clean = Image::new(mean, ColorSpace::Rgb)?
            .with_provenance(format!("burst_mean:{scene_id}"));
        save_image(&hr_clean, scene_dir.join("hr_clean_000.png"), BitDepth::Sixteen)?;

        manifest.entries.push(PairEntry {
            hr_clean_path: format!("{scene_id}/hr_clean_000.png").into(),
            partner_path: format!("{scene_id}/hr_noisy_{:03}.png", config.holdout_index).into(),
            partner_role: PartnerRole::NoisyHr,
            scene_id,
        });
    }

    for u in 0..config.n_unpaired {
        let scene_id = format!("scene_{:04}", config.n_scenes + u);
        let scene_dir = out_dir.join(&scene_id);
        std::fs::create_dir_all(&scene_dir)?;
        let scene_seed = seed::mix(corpus_seed, &[tag::SCENE, (config.n_scenes + u) as u64]);
        let clean = procedural_scene(config.image_size, scene_seed);
        let frame_seed = seed::mix(corpus_seed, &[tag::UNPAIRED, u as u64]);
        let noisy = noisy_realization(&clean, config.sigma_read, config.sigma_shot, frame_seed);
        save_image(&clean, scene_dir.join("hr_clean_000.png"), BitDepth::Sixteen)?;
        save_image(&noisy, scene_dir.join("unpaired_000.png"), BitDepth::Sixteen)?;
        manifest.entries.push(PairEntry {
            hr_clean_path: format!("{scene_id}/hr_clean_000.png").into(),
            partner_path: format!("{scene_id}/unpaired_000.png").into(),
            partner_role: PartnerRole::UnpairedNoisy,
            scene_id,
        });
    }

    super::manifest::save_manifest(&manifest, out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Build a clean-pair manifest from a directory of PNGs: each image
/// partners itself, so the LR side is its nearest-neighbour downsample.
pub fn manifest_from_clean_dir(dir: &Path, scale_factor: usize) -> Result<PairManifest> {
    if !dir.is_dir() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let mut names: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|e| e == "png").unwrap_or(false))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Validation {
            issues: vec![format!("no PNG files under {}", dir.display())],
        });
    }
    let mut manifest = PairManifest::new(scale_factor);
    for p in names {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("img").to_string();
        manifest.entries.push(PairEntry {
            hr_clean_path: p.clone(),
            partner_path: p.clone(),
            partner_role: PartnerRole::NoisyHr,
            scene_id: stem,
        });
    }
    Ok(manifest)
}

/// Sample std of the noise at brightness x; used by tests and reports.
pub fn noise_sigma(config: &SynthConfig, x: f64) -> f64 {
    config.sigma_read + config.sigma_shot * x
}

#[allow(dead_code)]
fn normal_checked(mean: f64, std: f64) -> Normal<f64> {
    Normal::new(mean, std).expect("finite parameters")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::manifest::load_manifest;

    #[test]
    fn scenes_are_deterministic_and_in_range() {
        let a = procedural_scene(32, 7);
        let b = procedural_scene(32, 7);
        assert_eq!(a.data, b.data);
        assert!(a.data.iter().all(|v| (0.1..=0.9).contains(v)));
        let c = procedural_scene(32, 8);
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn burst_mean_approaches_clean_scene() {
        // law of large numbers: mean of 10^4 realizations within 3*sigma/100
        // of the clean value per pixel (away from the clamp boundaries)
        let clean = {
            let mut img = procedural_scene(8, 3);
            img.data.mapv_inplace(|v| v.clamp(0.25, 0.75));
            img
        };
        let (sr, ss) = (0.02, 0.06);
        let n = 10_000usize;
        let mut mean = Array3::<f64>::zeros(clean.data.raw_dim());
        for k in 0..n {
            mean += &noisy_realization(&clean, sr, ss, seed::mix(99, &[k as u64])).data;
        }
        mean /= n as f64;
        for (m, c) in mean.iter().zip(clean.data.iter()) {
            let sigma = sr + ss * c;
            let tol = 3.0 * sigma / (n as f64).sqrt();
            assert!(
                (m - c).abs() < tol + 1e-4,
                "pixel mean {m} vs clean {c} (tol {tol})"
            );
        }
    }

    #[test]
    fn corpus_is_reproducible_and_counts_match() {
        let dir = tempfile::tempdir().unwrap();
        let config = SynthConfig {
            n_scenes: 5,
            n_unpaired: 2,
            image_size: 16,
            burst_size: 3,
            ..SynthConfig::default()
        };
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        let ma = synth_burst_corpus(&config, 42, &out_a).unwrap();
        let mb = synth_burst_corpus(&config, 42, &out_b).unwrap();
        assert_eq!(ma, mb);

        // byte-for-byte identical image files
        let f = "scene_0000/hr_noisy_000.png";
        assert_eq!(
            std::fs::read(out_a.join(f)).unwrap(),
            std::fs::read(out_b.join(f)).unwrap()
        );

        // 5 paired + 2 unpaired
        assert_eq!(ma.entries_with_role(PartnerRole::NoisyHr).len(), 5);
        assert_eq!(ma.entries_with_role(PartnerRole::UnpairedNoisy).len(), 2);

        // written manifest loads back and validates against the corpus dir
        let loaded = load_manifest(out_a.join("manifest.json")).unwrap();
        assert_eq!(loaded, ma);
        loaded.validate(&out_a).unwrap();
    }

    #[test]
    fn bad_burst_size_rejected() {
        let config = SynthConfig { burst_size: 1, ..SynthConfig::default() };
        assert!(config.validate().is_err());
    }
}
