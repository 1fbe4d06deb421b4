//! Network definitions and forward passes for the four roles: degradation
//! generator, SR generator, discriminators, and the fixed feature network.

pub mod checkpoint;
pub mod disc;
#[cfg(test)]
mod tests;
pub mod feature;
pub mod h2l;
pub mod l2h;
pub mod layers;
pub mod ops;
pub mod spec;
pub mod store;

use ndarray::{Array1, Array2, Array4};

pub use spec::{NetworkKind, NetworkSpec};
pub use store::{GradStore, ParamId, ParamStore};

use crate::error::{Error, Result};
use crate::image::{ColorSpace, Image};
use crate::seed;

#[derive(Debug, Clone)]
pub enum Layout {
    H2l(h2l::H2lLayout),
    L2h(l2h::L2hLayout),
    Disc(disc::DiscLayout),
    Fx(feature::FxLayout),
}

/// A built network: spec, parameters, and the derived layer layout.
#[derive(Debug, Clone)]
pub struct NetworkState {
    pub spec: NetworkSpec,
    pub init_seed: u64,
    pub params: ParamStore,
    pub layout: Layout,
}

/// Deterministically construct and initialize a network from its spec.
pub fn build_network(spec: &NetworkSpec, init_seed: u64) -> Result<NetworkState> {
    spec.validate()?;
    let mut ps = ParamStore::new();
    let mut rng = seed::rng(seed::mix(init_seed, &[seed::tag::INIT]));
    let layout = match spec.kind {
        NetworkKind::H2lGen => Layout::H2l(h2l::H2lLayout::build(spec, &mut ps, &mut rng)),
        NetworkKind::L2hGen => Layout::L2h(l2h::L2hLayout::build(spec, &mut ps, &mut rng)),
        NetworkKind::Discriminator => Layout::Disc(disc::DiscLayout::build(spec, &mut ps, &mut rng)),
        NetworkKind::FeatureExtractor => Layout::Fx(feature::FxLayout::build(spec, &mut ps, &mut rng)),
    };
    Ok(NetworkState { spec: *spec, init_seed, params: ps, layout })
}

impl NetworkState {
    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn param_hash(&self) -> String {
        self.params.content_hash()
    }

    pub fn expect_kind(&self, kind: NetworkKind) -> Result<()> {
        if self.spec.kind != kind {
            return Err(Error::spec(format!(
                "expected a {kind:?} network, checkpoint holds {:?}",
                self.spec.kind
            )));
        }
        Ok(())
    }

    pub fn as_h2l(&self) -> Result<&h2l::H2lLayout> {
        match &self.layout {
            Layout::H2l(l) => Ok(l),
            _ => Err(Error::spec(format!("not an H2L generator: {:?}", self.spec.kind))),
        }
    }

    pub fn as_l2h(&self) -> Result<&l2h::L2hLayout> {
        match &self.layout {
            Layout::L2h(l) => Ok(l),
            _ => Err(Error::spec(format!("not an L2H generator: {:?}", self.spec.kind))),
        }
    }

    pub fn as_disc(&self) -> Result<&disc::DiscLayout> {
        match &self.layout {
            Layout::Disc(l) => Ok(l),
            _ => Err(Error::spec(format!("not a discriminator: {:?}", self.spec.kind))),
        }
    }

    pub fn as_fx(&self) -> Result<&feature::FxLayout> {
        match &self.layout {
            Layout::Fx(l) => Ok(l),
            _ => Err(Error::spec(format!("not a feature extractor: {:?}", self.spec.kind))),
        }
    }

    /// Raw batched H2L pass (no clamping); used in training.
    pub fn h2l_forward_batch(&self, hr: &Array4<f64>, noise: &Array4<f64>) -> Result<Array4<f64>> {
        Ok(self.as_h2l()?.forward_train(&self.params, hr, noise)?.0)
    }

    /// Raw batched L2H pass (no clamping); used in training.
    pub fn l2h_forward_batch(&self, lr: &Array4<f64>) -> Result<Array4<f64>> {
        Ok(self.as_l2h()?.forward_train(&self.params, lr)?.0)
    }

    /// Batched discriminator logits.
    pub fn disc_forward_batch(&self, img: &Array4<f64>) -> Result<Array1<f64>> {
        Ok(self.as_disc()?.forward_train(&self.params, img)?.0)
    }
}

/// Fixed perceptual network plus the tap layer defining φ(·).
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub state: NetworkState,
    pub tap: usize,
}

impl FeatureExtractor {
    pub fn new(state: NetworkState, tap: usize) -> Result<Self> {
        state.expect_kind(NetworkKind::FeatureExtractor)?;
        if !(1..=5).contains(&tap) {
            return Err(Error::Argument(format!("feature tap must be 1..=5, got {tap}")));
        }
        Ok(FeatureExtractor { state, tap })
    }

    pub fn from_seed(base_channels: usize, tap: usize, init_seed: u64) -> Result<Self> {
        let spec = NetworkSpec::feature_default().with_base_channels(base_channels);
        FeatureExtractor::new(build_network(&spec, init_seed)?, tap)
    }

    pub fn forward_batch(&self, img: &Array4<f64>) -> Result<Array4<f64>> {
        Ok(self
            .state
            .as_fx()?
            .forward_train(&self.state.params, img, self.tap)?
            .0)
    }
}

fn image_to_batch(img: &Image) -> Array4<f64> {
    let (c, h, w) = img.data.dim();
    img.data
        .view()
        .to_shape((1, c, h, w))
        .expect("insert batch axis")
        .to_owned()
}

fn batch_to_image(batch: &Array4<f64>, cs: ColorSpace) -> Result<Image> {
    let (_, c, h, w) = batch.dim();
    let data = batch
        .view()
        .to_shape((c, h, w))
        .expect("drop batch axis")
        .to_owned();
    Image::from_unclamped(data, cs)
}

/// Degradation pass at inference: 3-channel HR plus an (H, W) noise plane in,
/// clamped RGB LR out at 1/scale resolution.
pub fn forward_h2l(
    state: &NetworkState,
    hr: &Image,
    noise: &ndarray::Array2<f64>,
) -> Result<Image> {
    if hr.color_space != ColorSpace::Rgb {
        return Err(Error::State("H2L input must be RGB".into()));
    }
    let (h, w) = noise.dim();
    let noise4 = noise.view().to_shape((1, 1, h, w)).expect("noise axes").to_owned();
    let out = state.h2l_forward_batch(&image_to_batch(hr), &noise4)?;
    batch_to_image(&out, ColorSpace::Rgb)
}

/// SR pass at inference: clamped RGB output at scale x resolution.
pub fn forward_l2h(state: &NetworkState, lr: &Image) -> Result<Image> {
    if lr.color_space != ColorSpace::Rgb {
        return Err(Error::State("L2H input must be RGB".into()));
    }
    let out = state.l2h_forward_batch(&image_to_batch(lr))?;
    batch_to_image(&out, ColorSpace::Rgb)
}

/// Raw scalar logit for one image.
pub fn forward_discriminator(state: &NetworkState, img: &Image) -> Result<f64> {
    let logits = state.disc_forward_batch(&image_to_batch(img))?;
    let v = logits[0];
    if !v.is_finite() {
        return Err(Error::Numeric { iteration: 0, detail: "discriminator logit not finite".into() });
    }
    Ok(v)
}

/// φ(img): deterministic feature map (C, H', W') of the tap layer.
pub fn extract_features(fx: &FeatureExtractor, img: &Image) -> Result<ndarray::Array3<f64>> {
    if img.color_space != ColorSpace::Rgb {
        return Err(Error::State("feature extraction expects RGB".into()));
    }
    let out = fx.forward_batch(&image_to_batch(img))?;
    let (_, c, h, w) = out.dim();
    Ok(out.view().to_shape((c, h, w)).expect("drop batch axis").to_owned())
}

/// Logistic sigmoid, used to read probabilities off logits.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A dense-layer view of batches used by losses and tests.
pub fn flatten_batch(x: &Array4<f64>) -> Array2<f64> {
    let (n, c, h, w) = x.dim();
    x.view().to_shape((n, c * h * w)).expect("flatten").to_owned()
}
