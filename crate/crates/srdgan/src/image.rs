//! Deterministic image primitives shared by the whole pipeline.
//!
//! Images are `(C, H, W)` arrays of `f64` in `[0, 1]`. Every public
//! operation preserves that invariant; randomized operations are pure
//! functions of their inputs and an explicit seed.

use std::path::Path;

use ndarray::{s, Array1, Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColorSpace {
    Rgb,
    Y,
}

/// Floating-point raster in `[0,1]`, `(C, H, W)` layout, C ∈ {1, 3}.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub data: Array3<f64>,
    pub color_space: ColorSpace,
    pub provenance: String,
}

/// Additive Gaussian noise parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mean: f64,
    pub std_dev: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl Image {
    pub fn new(data: Array3<f64>, color_space: ColorSpace) -> Result<Self> {
        let (c, h, w) = data.dim();
        if h < 1 || w < 1 || !(c == 1 || c == 3) {
            return Err(Error::dimension(format!(
                "image must be (C,H,W) with C in {{1,3}}, H,W >= 1; got ({c},{h},{w})"
            )));
        }
        if color_space == ColorSpace::Y && c != 1 {
            return Err(Error::State("Y color space requires 1 channel".into()));
        }
        if color_space == ColorSpace::Rgb && c != 3 {
            return Err(Error::State("RGB color space requires 3 channels".into()));
        }
        if !data.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
            return Err(Error::Argument(
                "image values must be finite and in [0,1]".into(),
            ));
        }
        Ok(Image {
            data,
            color_space,
            provenance: String::new(),
        })
    }

    /// Like `new` but clamps into `[0,1]` instead of rejecting.
    pub fn from_unclamped(mut data: Array3<f64>, color_space: ColorSpace) -> Result<Self> {
        data.mapv_inplace(|v| v.clamp(0.0, 1.0));
        Image::new(data, color_space)
    }

    pub fn with_provenance(mut self, tag: impl Into<String>) -> Self {
        self.provenance = tag.into();
        self
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }
}

/// Load an 8- or 16-bit PNG, scaled to [0,1], channel order R,G,B.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let dyn_img = image::open(path)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;

    use image::DynamicImage::*;
    let (data, cs) = match dyn_img {
        ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            let mut a = Array3::zeros((1, h as usize, w as usize));
            for (x, y, p) in img.enumerate_pixels() {
                a[[0, y as usize, x as usize]] = p.0[0] as f64 / 255.0;
            }
            (a, ColorSpace::Y)
        }
        ImageLuma16(img) => {
            let (w, h) = img.dimensions();
            let mut a = Array3::zeros((1, h as usize, w as usize));
            for (x, y, p) in img.enumerate_pixels() {
                a[[0, y as usize, x as usize]] = p.0[0] as f64 / 65535.0;
            }
            (a, ColorSpace::Y)
        }
        ImageRgb8(img) => {
            let (w, h) = img.dimensions();
            let mut a = Array3::zeros((3, h as usize, w as usize));
            for (x, y, p) in img.enumerate_pixels() {
                for c in 0..3 {
                    a[[c, y as usize, x as usize]] = p.0[c] as f64 / 255.0;
                }
            }
            (a, ColorSpace::Rgb)
        }
        ImageRgb16(img) => {
            let (w, h) = img.dimensions();
            let mut a = Array3::zeros((3, h as usize, w as usize));
            for (x, y, p) in img.enumerate_pixels() {
                for c in 0..3 {
                    a[[c, y as usize, x as usize]] = p.0[c] as f64 / 65535.0;
                }
            }
            (a, ColorSpace::Rgb)
        }
        ImageRgba8(img) => {
            let (w, h) = img.dimensions();
            let mut a = Array3::zeros((3, h as usize, w as usize));
            for (x, y, p) in img.enumerate_pixels() {
                for c in 0..3 {
                    a[[c, y as usize, x as usize]] = p.0[c] as f64 / 255.0;
                }
            }
            (a, ColorSpace::Rgb)
        }
        other => {
            return Err(Error::format(format!(
                "{}: unsupported pixel format {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    Ok(Image::new(data, cs)?.with_provenance(path.display().to_string()))
}

/// Write an image as PNG at the requested bit depth.
pub fn save_image(img: &Image, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let (c, h, w) = img.data.dim();
    match depth {
        BitDepth::Eight => {
            let mut buf = Vec::with_capacity(c * h * w);
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..c {
                        buf.push((img.data[[ch, y, x]] * 255.0).round() as u8);
                    }
                }
            }
            let saved = if c == 1 {
                image::GrayImage::from_raw(w as u32, h as u32, buf)
                    .expect("buffer sized above")
                    .save(path)
            } else {
                image::RgbImage::from_raw(w as u32, h as u32, buf)
                    .expect("buffer sized above")
                    .save(path)
            };
            saved.map_err(|e| Error::format(format!("{}: {e}", path.display())))
        }
        BitDepth::Sixteen => {
            let mut buf = Vec::with_capacity(c * h * w);
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..c {
                        buf.push((img.data[[ch, y, x]] * 65535.0).round() as u16);
                    }
                }
            }
            let saved = if c == 1 {
                image::ImageBuffer::<image::Luma<u16>, _>::from_raw(w as u32, h as u32, buf)
                    .expect("buffer sized above")
                    .save(path)
            } else {
                image::ImageBuffer::<image::Rgb<u16>, _>::from_raw(w as u32, h as u32, buf)
                    .expect("buffer sized above")
                    .save(path)
            };
            saved.map_err(|e| Error::format(format!("{}: {e}", path.display())))
        }
    }
}

fn check_divisible(h: usize, w: usize, factor: usize) -> Result<()> {
    if factor == 0 {
        return Err(Error::Argument("factor must be >= 1".into()));
    }
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::dimension(format!(
            "size {h}x{w} not divisible by factor {factor}"
        )));
    }
    Ok(())
}

/// Subsample keeping the top-left pixel of each factor×factor block.
pub fn nearest_downsample(img: &Image, factor: usize) -> Result<Image> {
    let (c, h, w) = img.data.dim();
    check_divisible(h, w, factor)?;
    let (oh, ow) = (h / factor, w / factor);
    let mut out = Array3::zeros((c, oh, ow));
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                out[[ch, i, j]] = img.data[[ch, i * factor, j * factor]];
            }
        }
    }
    Ok(Image {
        data: out,
        color_space: img.color_space,
        provenance: img.provenance.clone(),
    })
}

/// Replicate each pixel into a factor×factor block.
pub fn nearest_upsample(img: &Image, factor: usize) -> Result<Image> {
    if factor == 0 {
        return Err(Error::Argument("factor must be >= 1".into()));
    }
    let (c, h, w) = img.data.dim();
    let mut out = Array3::zeros((c, h * factor, w * factor));
    for ch in 0..c {
        for i in 0..h * factor {
            for j in 0..w * factor {
                out[[ch, i, j]] = img.data[[ch, i / factor, j / factor]];
            }
        }
    }
    Ok(Image {
        data: out,
        color_space: img.color_space,
        provenance: img.provenance.clone(),
    })
}

/// Catmull-Rom cubic kernel (a = -0.5).
pub fn cubic_kernel(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x.powi(3) - (A + 3.0) * x.powi(2) + 1.0
    } else if x < 2.0 {
        A * x.powi(3) - 5.0 * A * x.powi(2) + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// Tap weights for resampling a length-`n_in` axis to `n_out`.
///
/// Output sample i is centered at input coordinate (i+0.5)*n_in/n_out - 0.5.
/// When shrinking, the kernel is stretched by the scale factor (antialias),
/// which is the standard convention for cubic downscaling. Taps falling
/// outside the axis clamp to the edge; weights are normalized to sum to 1,
/// so constants are preserved exactly.
pub fn resample_taps(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = n_in as f64 / n_out as f64;
    let stretch = ratio.max(1.0);
    let support = 2.0 * stretch;
    (0..n_out)
        .map(|i| {
            let center = (i as f64 + 0.5) * ratio - 0.5;
            let lo = (center - support).floor() as i64;
            let hi = (center + support).ceil() as i64;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            let mut total = 0.0;
            for k in lo..=hi {
                let wgt = cubic_kernel((k as f64 - center) / stretch);
                if wgt != 0.0 {
                    let idx = k.clamp(0, n_in as i64 - 1) as usize;
                    total += wgt;
                    match taps.iter_mut().find(|(j, _)| *j == idx) {
                        Some((_, acc)) => *acc += wgt,
                        None => taps.push((idx, wgt)),
                    }
                }
            }
            for (_, wgt) in taps.iter_mut() {
                *wgt /= total;
            }
            taps
        })
        .collect()
}

fn resample_axis_rows(data: &Array3<f64>, taps: &[Vec<(usize, f64)>]) -> Array3<f64> {
    let (c, _h, w) = data.dim();
    let mut out = Array3::zeros((c, taps.len(), w));
    for ch in 0..c {
        for (i, row_taps) in taps.iter().enumerate() {
            for j in 0..w {
                let mut acc = 0.0;
                for &(src, wgt) in row_taps {
                    acc += wgt * data[[ch, src, j]];
                }
                out[[ch, i, j]] = acc;
            }
        }
    }
    out
}

fn resample_axis_cols(data: &Array3<f64>, taps: &[Vec<(usize, f64)>]) -> Array3<f64> {
    let (c, h, _w) = data.dim();
    let mut out = Array3::zeros((c, h, taps.len()));
    for ch in 0..c {
        for i in 0..h {
            for (j, col_taps) in taps.iter().enumerate() {
                let mut acc = 0.0;
                for &(src, wgt) in col_taps {
                    acc += wgt * data[[ch, i, src]];
                }
                out[[ch, i, j]] = acc;
            }
        }
    }
    out
}

fn resize_bicubic(img: &Image, oh: usize, ow: usize) -> Image {
    let (_, h, w) = img.data.dim();
    let row_taps = resample_taps(h, oh);
    let col_taps = resample_taps(w, ow);
    let mut out = resample_axis_cols(&resample_axis_rows(&img.data, &row_taps), &col_taps);
    out.mapv_inplace(|v| v.clamp(0.0, 1.0));
    Image {
        data: out,
        color_space: img.color_space,
        provenance: img.provenance.clone(),
    }
}

/// Separable Catmull-Rom downsample (antialiased), clamped to [0,1].
pub fn bicubic_downsample(img: &Image, factor: usize) -> Result<Image> {
    let (_, h, w) = img.data.dim();
    check_divisible(h, w, factor)?;
    Ok(resize_bicubic(img, h / factor, w / factor))
}

/// Separable Catmull-Rom upsample, clamped to [0,1].
pub fn bicubic_upsample(img: &Image, factor: usize) -> Result<Image> {
    if factor == 0 {
        return Err(Error::Argument("factor must be >= 1".into()));
    }
    let (_, h, w) = img.data.dim();
    Ok(resize_bicubic(img, h * factor, w * factor))
}

/// out = clamp(img + n, 0, 1) with n ~ iid Gaussian(mean, std_dev) drawn
/// deterministically from spec.seed in (c, h, w) order.
pub fn add_gaussian_noise(img: &Image, spec: &NoiseSpec) -> Result<Image> {
    if spec.std_dev < 0.0 {
        return Err(Error::Argument("std_dev must be >= 0".into()));
    }
    let normal = Normal::new(spec.mean, spec.std_dev)
        .map_err(|e| Error::Argument(format!("bad noise spec: {e}")))?;
    let mut rng = seed::rng(spec.seed);
    let mut out = img.data.clone();
    for v in out.iter_mut() {
        *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
    }
    Ok(Image {
        data: out,
        color_space: img.color_space,
        provenance: img.provenance.clone(),
    })
}

/// A (H, W) plane of Gaussian draws (unclamped); the H2L noise input.
pub fn gaussian_plane(h: usize, w: usize, spec: &NoiseSpec) -> Result<Array2<f64>> {
    if spec.std_dev < 0.0 {
        return Err(Error::Argument("std_dev must be >= 0".into()));
    }
    let normal = Normal::new(spec.mean, spec.std_dev)
        .map_err(|e| Error::Argument(format!("bad noise spec: {e}")))?;
    let mut rng = seed::rng(spec.seed);
    Ok(Array2::from_shape_simple_fn((h, w), || normal.sample(&mut rng)))
}

/// ITU-R BT.601 full-range luma.
pub fn rgb_to_y(img: &Image) -> Result<Image> {
    if img.color_space != ColorSpace::Rgb {
        return Err(Error::State("rgb_to_y requires an RGB image".into()));
    }
    let (_, h, w) = img.data.dim();
    let mut out = Array3::zeros((1, h, w));
    for i in 0..h {
        for j in 0..w {
            let y = 0.299 * img.data[[0, i, j]]
                + 0.587 * img.data[[1, i, j]]
                + 0.114 * img.data[[2, i, j]];
            out[[0, i, j]] = y.clamp(0.0, 1.0);
        }
    }
    Ok(Image {
        data: out,
        color_space: ColorSpace::Y,
        provenance: img.provenance.clone(),
    })
}

/// Deterministic square crop; returns the crop and its (row, col) offset.
pub fn random_crop(img: &Image, size: usize, crop_seed: u64) -> Result<(Image, (usize, usize))> {
    let (_, h, w) = img.data.dim();
    if size == 0 || size > h || size > w {
        return Err(Error::dimension(format!(
            "crop size {size} invalid for {h}x{w} image"
        )));
    }
    let mut rng = seed::rng(seed::mix(crop_seed, &[seed::tag::CROP]));
    let row = rng.gen_range(0..=h - size);
    let col = rng.gen_range(0..=w - size);
    Ok((crop_at(img, row, col, size, size)?, (row, col)))
}

/// Fixed-offset crop.
pub fn crop_at(img: &Image, row: usize, col: usize, ch: usize, cw: usize) -> Result<Image> {
    let (_, h, w) = img.data.dim();
    if row + ch > h || col + cw > w {
        return Err(Error::dimension(format!(
            "crop {ch}x{cw}@({row},{col}) exceeds {h}x{w}"
        )));
    }
    Ok(Image {
        data: img.data.slice(s![.., row..row + ch, col..col + cw]).to_owned(),
        color_space: img.color_space,
        provenance: img.provenance.clone(),
    })
}

/// Mean over channels of the 2-norm-squared, used by tests and reports.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    if a.data.dim() != b.data.dim() {
        return Err(Error::dimension(format!(
            "mse shape mismatch: {:?} vs {:?}",
            a.data.dim(),
            b.data.dim()
        )));
    }
    let n = a.data.len() as f64;
    Ok(a.data
        .iter()
        .zip(b.data.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// Uniform-random test image; deterministic in the seed.
pub fn random_image(c: usize, h: usize, w: usize, img_seed: u64) -> Image {
    let mut rng = seed::rng(img_seed);
    let data = Array3::from_shape_simple_fn((c, h, w), || rng.gen_range(0.0..=1.0));
    let cs = if c == 1 { ColorSpace::Y } else { ColorSpace::Rgb };
    Image::new(data, cs).expect("random image is in range")
}

/// Per-channel means, used when reporting local brightness.
pub fn channel_means(img: &Image) -> Array1<f64> {
    let (c, h, w) = img.data.dim();
    let mut out = Array1::zeros(c);
    for ch in 0..c {
        out[ch] = img.data.slice(s![ch, .., ..]).sum() / (h * w) as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(vals: Vec<f64>, h: usize, w: usize) -> Image {
        Image::new(
            Array3::from_shape_vec((1, h, w), vals).unwrap(),
            ColorSpace::Y,
        )
        .unwrap()
    }

    #[test]
    fn png_roundtrip_8bit_hits_scale_endpoints() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let img = gray(vec![1.0, 0.0, 0.5, 0.25], 2, 2);
        save_image(&img, &path, BitDepth::Eight).unwrap();
        let back = load_image(&path).unwrap();
        // 255 -> 1.0, 0 -> 0.0 exactly
        assert_eq!(back.data[[0, 0, 0]], 1.0);
        assert_eq!(back.data[[0, 0, 1]], 0.0);
        assert!((back.data[[0, 1, 0]] - 0.5).abs() < 1.0 / 255.0);
    }

    #[test]
    fn png_16bit_integer_scaling_matches_brute_force() {
        // brute-force oracle: value k of a 16-bit PNG must load as k/65535
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t16.png");
        let raw: Vec<u16> = vec![0, 1, 32768, 65535];
        image::ImageBuffer::<image::Luma<u16>, _>::from_raw(2, 2, raw.clone())
            .unwrap()
            .save(&path)
            .unwrap();
        let img = load_image(&path).unwrap();
        let flat: Vec<f64> = img.data.iter().copied().collect();
        for (got, k) in flat.iter().zip(raw.iter()) {
            let expect = *k as f64 / 65535.0;
            assert!((got - expect).abs() < 1e-12, "{k}: {got} vs {expect}");
        }
    }

    #[test]
    fn load_missing_file_is_not_found() {
        match load_image("/definitely/not/here.png") {
            Err(Error::NotFound(_)) => {}
            other => panic!("expected NotFound, got {other:?}"),
        }
    }

    #[test]
    fn nearest_down_takes_top_left() {
        let img = gray(vec![0.1, 0.2, 0.3, 0.4], 2, 2);
        let out = nearest_downsample(&img, 2).unwrap();
        assert_eq!(out.data.dim(), (1, 1, 1));
        assert_eq!(out.data[[0, 0, 0]], 0.1);
    }

    #[test]
    fn nearest_down_ramp_matches_index_oracle() {
        // 4x4 row-major ramp 0..15 (scaled into [0,1]), factor 2 -> [[0,2],[8,10]]
        let vals: Vec<f64> = (0..16).map(|v| v as f64 / 15.0).collect();
        let img = gray(vals, 4, 4);
        let out = nearest_downsample(&img, 2).unwrap();
        for (i, j, expect) in [(0, 0, 0.0), (0, 1, 2.0), (1, 0, 8.0), (1, 1, 10.0)] {
            assert_eq!(out.data[[0, i, j]], expect / 15.0);
        }
    }

    #[test]
    fn nearest_down_non_divisible_errors() {
        let img = gray(vec![0.0; 9], 3, 3);
        assert!(matches!(
            nearest_downsample(&img, 2),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn nearest_up_replicates_blocks() {
        let img = gray(vec![0.7], 1, 1);
        let out = nearest_upsample(&img, 2).unwrap();
        assert_eq!(out.data.dim(), (1, 2, 2));
        assert!(out.data.iter().all(|&v| v == 0.7));

        // 2x2 input, factor 3 -> 6x6 block-replicated (index oracle)
        let img = gray(vec![0.1, 0.2, 0.3, 0.4], 2, 2);
        let out = nearest_upsample(&img, 3).unwrap();
        assert_eq!(out.data.dim(), (1, 6, 6));
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(out.data[[0, i, j]], img.data[[0, i / 3, j / 3]]);
            }
        }
    }

    #[test]
    fn factor_one_is_identity() {
        let img = random_image(3, 5, 5, 11);
        assert_eq!(nearest_upsample(&img, 1).unwrap().data, img.data);
        assert_eq!(nearest_downsample(&img, 1).unwrap().data, img.data);
        let bic = bicubic_downsample(&img, 1).unwrap();
        for (a, b) in bic.data.iter().zip(img.data.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bicubic_constant_stays_constant() {
        let img = gray(vec![0.37; 64], 8, 8);
        let out = bicubic_downsample(&img, 2).unwrap();
        for &v in out.data.iter() {
            assert!((v - 0.37).abs() < 1e-6);
        }
    }

    /// Dense 2D oracle: direct O(n^2 k^2) summation with the product kernel,
    /// independent of the separable implementation path.
    fn bicubic_down_dense_oracle(img: &Image, factor: usize) -> Array3<f64> {
        let (c, h, w) = img.data.dim();
        let (oh, ow) = (h / factor, w / factor);
        let row_taps = resample_taps(h, oh);
        let col_taps = resample_taps(w, ow);
        // materialize dense weight matrices and do the full 2D sum
        let mut wr = Array2::<f64>::zeros((oh, h));
        for (i, taps) in row_taps.iter().enumerate() {
            for &(j, wgt) in taps {
                wr[[i, j]] += wgt;
            }
        }
        let mut wc = Array2::<f64>::zeros((ow, w));
        for (i, taps) in col_taps.iter().enumerate() {
            for &(j, wgt) in taps {
                wc[[i, j]] += wgt;
            }
        }
        let mut out = Array3::zeros((c, oh, ow));
        for ch in 0..c {
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut acc = 0.0;
                    for ii in 0..h {
                        for jj in 0..w {
                            acc += wr[[oi, ii]] * wc[[oj, jj]] * img.data[[ch, ii, jj]];
                        }
                    }
                    out[[ch, oi, oj]] = acc.clamp(0.0, 1.0);
                }
            }
        }
        out
    }

    #[test]
    fn bicubic_matches_dense_convolution_oracle() {
        // 8x8 ramp, factor 2
        let vals: Vec<f64> = (0..64).map(|v| v as f64 / 63.0).collect();
        let img = gray(vals, 8, 8);
        let got = bicubic_downsample(&img, 2).unwrap();
        let want = bicubic_down_dense_oracle(&img, 2);
        for (a, b) in got.data.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
        // and on random RGB content
        let img = random_image(3, 12, 8, 99);
        let got = bicubic_downsample(&img, 4).unwrap();
        let want = bicubic_down_dense_oracle(&img, 4);
        for (a, b) in got.data.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn noise_zero_std_is_identity_and_seeded_draws_repeat() {
        let img = random_image(3, 6, 6, 5);
        let same = add_gaussian_noise(
            &img,
            &NoiseSpec { mean: 0.0, std_dev: 0.0, seed: 1 },
        )
        .unwrap();
        assert_eq!(same.data, img.data);

        let spec = NoiseSpec { mean: 0.0, std_dev: 0.05, seed: 42 };
        let a = add_gaussian_noise(&img, &spec).unwrap();
        let b = add_gaussian_noise(&img, &spec).unwrap();
        assert_eq!(a.data, b.data);
        let c = add_gaussian_noise(
            &img,
            &NoiseSpec { seed: 43, ..spec },
        )
        .unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn noise_sample_std_matches_statistical_oracle() {
        // 10^6 pre-clamp draws: sample std within 0.05 +/- 0.001
        let spec = NoiseSpec { mean: 0.0, std_dev: 0.05, seed: 7 };
        let plane = gaussian_plane(1000, 1000, &spec).unwrap();
        let n = plane.len() as f64;
        let mean = plane.sum() / n;
        let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        assert!((std - 0.05).abs() < 0.001, "sample std {std}");
        assert!(mean.abs() < 0.001, "sample mean {mean}");
    }

    #[test]
    fn luma_weights() {
        let mut data = Array3::zeros((3, 1, 1));
        data.fill(1.0);
        let white = Image::new(data, ColorSpace::Rgb).unwrap();
        assert!((rgb_to_y(&white).unwrap().data[[0, 0, 0]] - 1.0).abs() < 1e-12);

        let black = Image::new(Array3::zeros((3, 1, 1)), ColorSpace::Rgb).unwrap();
        assert_eq!(rgb_to_y(&black).unwrap().data[[0, 0, 0]], 0.0);

        let mut data = Array3::zeros((3, 1, 1));
        data[[0, 0, 0]] = 1.0;
        let red = Image::new(data, ColorSpace::Rgb).unwrap();
        assert!((rgb_to_y(&red).unwrap().data[[0, 0, 0]] - 0.299).abs() < 1e-12);
    }

    #[test]
    fn rgb_to_y_rejects_y_input() {
        let img = random_image(1, 4, 4, 3);
        assert!(matches!(rgb_to_y(&img), Err(Error::State(_))));
    }

    #[test]
    fn crop_whole_image_is_identity_at_origin() {
        let img = random_image(3, 8, 8, 21);
        let (crop, off) = random_crop(&img, 8, 123).unwrap();
        assert_eq!(off, (0, 0));
        assert_eq!(crop.data, img.data);
    }

    #[test]
    fn crop_is_deterministic_in_seed() {
        let img = random_image(3, 32, 32, 2);
        let (a, oa) = random_crop(&img, 10, 77).unwrap();
        let (b, ob) = random_crop(&img, 10, 77).unwrap();
        assert_eq!(oa, ob);
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn crop_too_large_errors() {
        let img = random_image(1, 4, 4, 2);
        assert!(matches!(random_crop(&img, 5, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn crop_offsets_uniform_by_chi_square() {
        // 1000 draws on a 100x100 image, size 10: offsets live in [0,90]^2.
        // Bin each axis into 7 bins of width 13 (91 = 7*13) -> 49 cells.
        // Chi-square critical value for 48 df at p = 0.01 is 73.68.
        let img = random_image(1, 100, 100, 0);
        let mut counts = [[0u32; 7]; 7];
        for k in 0..1000u64 {
            let (_, (r, c)) = random_crop(&img, 10, seed::mix(555, &[k])).unwrap();
            assert!(r <= 90 && c <= 90);
            counts[r / 13][c / 13] += 1;
        }
        let expected = 1000.0 / 49.0;
        let chi2: f64 = counts
            .iter()
            .flatten()
            .map(|&o| {
                let d = o as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 73.68, "chi-square statistic {chi2}");
    }

    proptest! {
        #[test]
        fn up_then_down_roundtrips_exactly(
            h in 1usize..8, w in 1usize..8, factor in 1usize..5, seed_v in 0u64..1000
        ) {
            let img = random_image(1, h, w, seed_v);
            let up = nearest_upsample(&img, factor).unwrap();
            let back = nearest_downsample(&up, factor).unwrap();
            prop_assert_eq!(back.data, img.data);
        }

        #[test]
        fn resamplers_preserve_bounds(hw in 1usize..5, factor in 1usize..4, seed_v in 0u64..1000) {
            let img = random_image(3, hw * factor, hw * factor, seed_v);
            for out in [
                nearest_downsample(&img, factor).unwrap(),
                nearest_upsample(&img, factor).unwrap(),
                bicubic_downsample(&img, factor).unwrap(),
                bicubic_upsample(&img, factor).unwrap(),
            ] {
                prop_assert!(out.data.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
