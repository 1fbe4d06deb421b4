//! Training objectives: mean-squared pixel loss, L1 feature loss, the
//! non-saturating generator GAN loss, the discriminator objective, and
//! their weighted combination. Logits, not probabilities, cross module
//! boundaries; log-sigmoids go through softplus for stability.

use ndarray::{Array1, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::FeatureExtractor;

/// Weights for the two three-term objectives. alpha1..3 weight the
/// degradation stage (pixel, feature, GAN); alpha4..6 the SR stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub alpha5: f64,
    pub alpha6: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha1: 1e-2,
            alpha2: 1.0,
            alpha3: 5e-3,
            alpha4: 1e-2,
            alpha5: 1.0,
            alpha6: 5e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    H2l,
    L2h,
    Joint,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::H2l => write!(f, "h2l"),
            Stage::L2h => write!(f, "l2h"),
            Stage::Joint => write!(f, "joint"),
        }
    }
}

impl LossWeights {
    /// (pixel, feature, gan) weights for a stage.
    pub fn for_stage(&self, stage: Stage) -> (f64, f64, f64) {
        match stage {
            Stage::H2l => (self.alpha1, self.alpha2, self.alpha3),
            Stage::L2h => (self.alpha4, self.alpha5, self.alpha6),
            // joint reporting uses the H2L triple; the engine combines both
            Stage::Joint => (self.alpha1, self.alpha2, self.alpha3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha1, self.alpha2, self.alpha3, self.alpha4, self.alpha5, self.alpha6];
        if all.iter().any(|a| *a < 0.0 || !a.is_finite()) {
            return Err(Error::Argument("loss weights must be finite and >= 0".into()));
        }
        if self.alpha1 + self.alpha2 + self.alpha3 <= 0.0
            || self.alpha4 + self.alpha5 + self.alpha6 <= 0.0
        {
            return Err(Error::Argument(
                "each stage needs at least one positive loss weight".into(),
            ));
        }
        Ok(())
    }
}

/// Per-batch loss decomposition; components are unweighted, total applies
/// the stage weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub pixel: f64,
    pub feature: f64,
    pub adversarial: f64,
    pub total: f64,
    pub stage: Stage,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        self.pixel.is_finite()
            && self.feature.is_finite()
            && self.adversarial.is_finite()
            && self.total.is_finite()
    }
}

fn check_same_shape(pred: &Array4<f64>, target: &Array4<f64>) -> Result<()> {
    if pred.dim() != target.dim() {
        return Err(Error::dimension(format!(
            "loss shape mismatch: {:?} vs {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    Ok(())
}

/// Mean over all elements of the squared difference.
pub fn pixel_loss(pred: &Array4<f64>, target: &Array4<f64>) -> Result<f64> {
    check_same_shape(pred, target)?;
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// Pixel loss plus its gradient w.r.t. pred.
pub fn pixel_loss_grad(pred: &Array4<f64>, target: &Array4<f64>) -> Result<(f64, Array4<f64>)> {
    let loss = pixel_loss(pred, target)?;
    let n = pred.len() as f64;
    let grad = (pred - target) * (2.0 / n);
    Ok((loss, grad))
}

/// Mean absolute difference between φ(pred) and φ(target).
pub fn feature_loss(pred: &Array4<f64>, target: &Array4<f64>, fx: &FeatureExtractor) -> Result<f64> {
    check_same_shape(pred, target)?;
    let fp = fx.forward_batch(pred)?;
    let ft = fx.forward_batch(target)?;
    let n = fp.len() as f64;
    Ok(fp.iter().zip(ft.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n)
}

/// Feature loss plus its gradient w.r.t. pred (backprop through the fixed φ).
pub fn feature_loss_grad(
    pred: &Array4<f64>,
    target: &Array4<f64>,
    fx: &FeatureExtractor,
) -> Result<(f64, Array4<f64>)> {
    check_same_shape(pred, target)?;
    let layout = fx.state.as_fx()?;
    let (fp, cache) = layout.forward_train(&fx.state.params, pred, fx.tap)?;
    let ft = fx.forward_batch(target)?;
    let n = fp.len() as f64;
    let loss = fp.iter().zip(ft.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let mut g_feat = Array4::zeros(fp.dim());
    ndarray::Zip::from(&mut g_feat).and(&fp).and(&ft).for_each(|g, &a, &b| {
        *g = if a > b { 1.0 } else if a < b { -1.0 } else { 0.0 } / n;
    });
    let grad = layout.backward_input(&fx.state.params, &cache, &g_feat);
    Ok((loss, grad))
}

/// softplus(x) = ln(1 + e^x), computed without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// -log σ(x) = softplus(-x).
fn neg_log_sigmoid(x: f64) -> f64 {
    softplus(-x)
}

/// Mean over the batch of -log σ(logit): the non-saturating generator loss.
pub fn generator_gan_loss(d_logits: &Array1<f64>) -> Result<f64> {
    if d_logits.is_empty() {
        return Err(Error::Argument("generator GAN loss needs a non-empty batch".into()));
    }
    Ok(d_logits.iter().map(|&l| neg_log_sigmoid(l)).sum::<f64>() / d_logits.len() as f64)
}

/// Generator GAN loss plus gradient w.r.t. the logits: d/dl = (σ(l) - 1)/B.
pub fn generator_gan_loss_grad(d_logits: &Array1<f64>) -> Result<(f64, Array1<f64>)> {
    let loss = generator_gan_loss(d_logits)?;
    let b = d_logits.len() as f64;
    let grad = d_logits.mapv(|l| (crate::nn::sigmoid(l) - 1.0) / b);
    Ok((loss, grad))
}

/// -mean log σ(real) - mean log(1 - σ(fake)).
pub fn discriminator_loss(real_logits: &Array1<f64>, fake_logits: &Array1<f64>) -> Result<f64> {
    if real_logits.is_empty() || fake_logits.is_empty() {
        return Err(Error::Argument("discriminator loss needs non-empty batches".into()));
    }
    let real = real_logits.iter().map(|&l| neg_log_sigmoid(l)).sum::<f64>()
        / real_logits.len() as f64;
    // -log(1 - σ(l)) = softplus(l)
    let fake = fake_logits.iter().map(|&l| softplus(l)).sum::<f64>() / fake_logits.len() as f64;
    Ok(real + fake)
}

/// Discriminator loss plus gradients w.r.t. (real, fake) logits.
pub fn discriminator_loss_grad(
    real_logits: &Array1<f64>,
    fake_logits: &Array1<f64>,
) -> Result<(f64, Array1<f64>, Array1<f64>)> {
    let loss = discriminator_loss(real_logits, fake_logits)?;
    let br = real_logits.len() as f64;
    let bf = fake_logits.len() as f64;
    let g_real = real_logits.mapv(|l| (crate::nn::sigmoid(l) - 1.0) / br);
    let g_fake = fake_logits.mapv(|l| crate::nn::sigmoid(l) / bf);
    Ok((loss, g_real, g_fake))
}

/// Weighted sum for a stage; the report keeps the unweighted components.
pub fn combine(
    pixel: f64,
    feature: f64,
    adversarial: f64,
    weights: &LossWeights,
    stage: Stage,
) -> LossReport {
    let (wp, wf, wg) = weights.for_stage(stage);
    LossReport {
        pixel,
        feature,
        adversarial,
        total: wp * pixel + wf * feature + wg * adversarial,
        stage,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use ndarray::array;
    use rand::Rng;

    fn rand4(dim: (usize, usize, usize, usize), sd: u64) -> Array4<f64> {
        let mut rng = seed::rng(sd);
        Array4::from_shape_simple_fn(dim, || rng.gen_range(0.0..1.0))
    }

    #[test]
    fn pixel_loss_basics() {
        let a = rand4((1, 1, 5, 5), 1);
        assert_eq!(pixel_loss(&a, &a).unwrap(), 0.0);

        let b = &a + 0.1;
        let loss = pixel_loss(&a, &b).unwrap();
        assert!((loss - 0.01).abs() < 1e-12, "constant diff d gives d^2, got {loss}");
    }

    #[test]
    fn pixel_loss_matches_double_loop_oracle() {
        let a = rand4((1, 1, 5, 5), 2);
        let b = rand4((1, 1, 5, 5), 3);
        let mut acc = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                let d = a[[0, 0, i, j]] - b[[0, 0, i, j]];
                acc += d * d;
            }
        }
        let want = acc / 25.0;
        assert!((pixel_loss(&a, &b).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn pixel_loss_shape_mismatch_errors() {
        let a = rand4((1, 1, 4, 4), 1);
        let b = rand4((1, 1, 5, 5), 1);
        assert!(matches!(pixel_loss(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn feature_loss_zero_symmetric_and_matches_oracle() {
        let fx = FeatureExtractor::from_seed(4, 3, 7).unwrap();
        let a = rand4((1, 3, 8, 8), 4);
        let b = rand4((1, 3, 8, 8), 5);
        assert_eq!(feature_loss(&a, &a, &fx).unwrap(), 0.0);
        let ab = feature_loss(&a, &b, &fx).unwrap();
        let ba = feature_loss(&b, &a, &fx).unwrap();
        assert!((ab - ba).abs() < 1e-15);

        // elementwise oracle over explicit feature maps
        let fa = fx.forward_batch(&a).unwrap();
        let fb = fx.forward_batch(&b).unwrap();
        let mut acc = 0.0;
        for (x, y) in fa.iter().zip(fb.iter()) {
            acc += (x - y).abs();
        }
        let want = acc / fa.len() as f64;
        assert!((ab - want).abs() < 1e-7);
    }

    #[test]
    fn gan_loss_analytic_points() {
        // probability 1 -> 0 loss (logit -> +inf approximated by a huge logit)
        let huge = array![500.0];
        assert!(generator_gan_loss(&huge).unwrap() < 1e-12);
        // probability 0.5 -> ln 2
        let half = array![0.0];
        let l = generator_gan_loss(&half).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        // batch {p=0.5, p=1.0} -> (ln2 + 0)/2
        let mixed = array![0.0, 500.0];
        let l = generator_gan_loss(&mixed).unwrap();
        assert!((l - std::f64::consts::LN_2 / 2.0).abs() < 1e-9);
        // empty batch errors
        let empty: Array1<f64> = Array1::zeros(0);
        assert!(matches!(generator_gan_loss(&empty), Err(Error::Argument(_))));
    }

    #[test]
    fn gan_loss_is_monotone_in_each_logit() {
        let base = array![0.3, -0.2, 1.5];
        let l0 = generator_gan_loss(&base).unwrap();
        for i in 0..3 {
            let mut up = base.clone();
            up[i] += 0.1;
            assert!(generator_gan_loss(&up).unwrap() < l0);
        }
    }

    #[test]
    fn discriminator_loss_analytic_points() {
        // perfect discriminator: real prob 1, fake prob 0
        let l = discriminator_loss(&array![500.0], &array![-500.0]).unwrap();
        assert!(l < 1e-12);
        // both at probability 0.5 -> 2 ln 2
        let l = discriminator_loss(&array![0.0], &array![0.0]).unwrap();
        assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        // mixed batch hand sum: -log σ(x) = ln(1+e^{-x}); -log(1-σ(x)) = ln(1+e^{x})
        let real = array![1.0, -0.5];
        let fake = array![0.25];
        let want = (((-1.0f64).exp().ln_1p()) + ((0.5f64).exp().ln_1p())) / 2.0
            + (0.25f64).exp().ln_1p();
        let l = discriminator_loss(&real, &fake).unwrap();
        assert!((l - want).abs() < 1e-12, "{l} vs {want}");
    }

    #[test]
    fn combine_is_linear_in_weights() {
        let w = LossWeights::default();
        let r = combine(0.5, 0.25, 0.125, &w, Stage::L2h);
        assert!((r.total - (w.alpha4 * 0.5 + w.alpha5 * 0.25 + w.alpha6 * 0.125)).abs() < 1e-15);
        assert_eq!(r.pixel, 0.5);

        let zero = combine(0.0, 0.0, 0.0, &w, Stage::H2l);
        assert_eq!(zero.total, 0.0);

        let unit = LossWeights { alpha1: 1.0, alpha2: 0.0, alpha3: 0.0, ..w };
        assert_eq!(combine(0.7, 9.0, 9.0, &unit, Stage::H2l).total, 0.7);

        let doubled = LossWeights {
            alpha1: 2.0 * w.alpha1,
            alpha2: 2.0 * w.alpha2,
            alpha3: 2.0 * w.alpha3,
            ..w
        };
        let a = combine(0.3, 0.2, 0.1, &w, Stage::H2l).total;
        let b = combine(0.3, 0.2, 0.1, &doubled, Stage::H2l).total;
        assert!((b - 2.0 * a).abs() < 1e-15);
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let fx = FeatureExtractor::from_seed(3, 2, 11).unwrap();
        let pred = rand4((1, 3, 6, 6), 21);
        let target = rand4((1, 3, 6, 6), 22);
        let eps = 1e-6;

        let (_, g_pix) = pixel_loss_grad(&pred, &target).unwrap();
        let (_, g_feat) = feature_loss_grad(&pred, &target, &fx).unwrap();
        let mut p = pred.clone();
        for &idx in &[[0usize, 0usize, 0usize, 0usize], [0, 1, 3, 2], [0, 2, 5, 5]] {
            let orig = p[idx];
            p[idx] = orig + eps;
            let pp = pixel_loss(&p, &target).unwrap();
            let fp = feature_loss(&p, &target, &fx).unwrap();
            p[idx] = orig - eps;
            let pm = pixel_loss(&p, &target).unwrap();
            let fm = feature_loss(&p, &target, &fx).unwrap();
            p[idx] = orig;
            assert!((g_pix[idx] - (pp - pm) / (2.0 * eps)).abs() < 1e-7);
            assert!((g_feat[idx] - (fp - fm) / (2.0 * eps)).abs() < 1e-6);
        }

        let logits = array![0.7, -1.3, 0.1];
        let (_, g_gen) = generator_gan_loss_grad(&logits).unwrap();
        let (_, g_real, g_fake) = discriminator_loss_grad(&logits, &logits).unwrap();
        for i in 0..3 {
            let mut l = logits.clone();
            l[i] += eps;
            let gp = generator_gan_loss(&l).unwrap();
            let dp = discriminator_loss(&l, &logits).unwrap();
            let fp = discriminator_loss(&logits, &l).unwrap();
            l[i] -= 2.0 * eps;
            let gm = generator_gan_loss(&l).unwrap();
            let dm = discriminator_loss(&l, &logits).unwrap();
            let fm = discriminator_loss(&logits, &l).unwrap();
            assert!((g_gen[i] - (gp - gm) / (2.0 * eps)).abs() < 1e-8);
            assert!((g_real[i] - (dp - dm) / (2.0 * eps)).abs() < 1e-8);
            assert!((g_fake[i] - (fp - fm) / (2.0 * eps)).abs() < 1e-8);
        }
    }
}
