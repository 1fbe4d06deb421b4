//! Fixed feature network defining the perceptual metric. Five convs with
//! LeakyReLU; φ(x) is the post-activation map of a configurable tap layer.
//! Parameters never change during training.

use ndarray::Array4;
use rand_chacha::ChaCha12Rng;

use super::layers::ConvLayer;
use super::ops;
use super::spec::NetworkSpec;
use super::store::ParamStore;
use crate::error::{Error, Result};

/// (kernel, stride, pad, channel multiplier vs base) per layer.
const LAYERS: [(usize, usize, usize); 5] = [(3, 1, 1), (3, 2, 1), (3, 1, 1), (3, 2, 1), (3, 1, 1)];

#[derive(Debug, Clone)]
pub struct FxLayout {
    convs: Vec<ConvLayer>,
}

pub struct FxCache {
    conv_ins: Vec<Array4<f64>>,
    conv_acts: Vec<Array4<f64>>,
}

/// Channel width of layer i (0-based) for a given base width.
pub fn layer_channels(base: usize, i: usize) -> usize {
    match i {
        0 | 1 => base,
        2 | 3 => 2 * base,
        _ => 4 * base,
    }
}

/// Spatial size after layer i (0-based) for input size s.
pub fn layer_size(mut s: usize, i: usize) -> usize {
    for (j, (k, stride, pad)) in LAYERS.iter().enumerate() {
        if j > i {
            break;
        }
        s = (s + 2 * pad - k) / stride + 1;
    }
    s
}

/// Receptive-field geometry of the tap layer: (span, jump, offset).
/// Feature (i, j) at the tap covers input rows
/// [i*jump + offset, i*jump + offset + span).
pub fn receptive_field(tap: usize) -> (i64, i64, i64) {
    let mut span: i64 = 1;
    let mut jump: i64 = 1;
    let mut start: i64 = 0; // center position of feature 0 in input coords
    for (k, stride, pad) in LAYERS.iter().take(tap) {
        span += (*k as i64 - 1) * jump;
        start += ((*k as i64 - 1) / 2 - *pad as i64) * jump;
        jump *= *stride as i64;
    }
    // convert center-based tracking to a cover interval
    (span, jump, start - (span - 1) / 2)
}

impl FxLayout {
    pub fn build(spec: &NetworkSpec, ps: &mut ParamStore, rng: &mut ChaCha12Rng) -> Self {
        let base = spec.base_channels;
        let mut convs = Vec::with_capacity(5);
        let mut cin = 3;
        for (i, (k, stride, pad)) in LAYERS.iter().enumerate() {
            let cout = layer_channels(base, i);
            convs.push(ConvLayer::init(ps, rng, &format!("conv{i}"), cin, cout, *k, *stride, *pad));
            cin = cout;
        }
        FxLayout { convs }
    }

    /// Features at the tap layer (1-based tap in 1..=5).
    pub fn forward_train(
        &self,
        ps: &ParamStore,
        img: &Array4<f64>,
        tap: usize,
    ) -> Result<(Array4<f64>, FxCache)> {
        if !(1..=5).contains(&tap) {
            return Err(Error::Argument(format!("feature tap must be 1..=5, got {tap}")));
        }
        let (_, c, _, _) = img.dim();
        if c != 3 {
            return Err(Error::dimension(format!("feature extractor expects RGB, got {c} channels")));
        }
        let mut conv_ins = Vec::with_capacity(tap);
        let mut conv_acts = Vec::with_capacity(tap);
        let mut cur = img.clone();
        for conv in self.convs.iter().take(tap) {
            let act = ops::leaky_relu(&conv.forward(ps, &cur)?);
            conv_ins.push(cur);
            conv_acts.push(act.clone());
            cur = act;
        }
        Ok((cur, FxCache { conv_ins, conv_acts }))
    }

    /// Gradient w.r.t. the input image; parameters stay untouched.
    pub fn backward_input(
        &self,
        ps: &ParamStore,
        cache: &FxCache,
        g_feat: &Array4<f64>,
    ) -> Array4<f64> {
        let tap = cache.conv_ins.len();
        let mut g = g_feat.clone();
        for (conv, (x_in, act)) in self
            .convs
            .iter()
            .take(tap)
            .zip(cache.conv_ins.iter().zip(cache.conv_acts.iter()))
            .rev()
        {
            let g_pre = ops::leaky_relu_backward(act, &g);
            g = conv.backward_input(ps, x_in, &g_pre);
        }
        g
    }
}
