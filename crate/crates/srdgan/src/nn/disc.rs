//! Patch discriminator: stride-2 convs with channel doubling, LeakyReLU,
//! and a dense layer producing one raw logit per sample.

use ndarray::{Array1, Array2, Array4};
use rand_chacha::ChaCha12Rng;

use super::layers::{ConvLayer, DenseLayer};
use super::ops;
use super::spec::NetworkSpec;
use super::store::{GradStore, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DiscLayout {
    convs: Vec<ConvLayer>,
    fc: DenseLayer,
    pub input_size: usize,
    flat_dim: usize,
    final_channels: usize,
    final_size: usize,
}

pub struct DiscCache {
    /// Inputs to each conv plus post-activation outputs.
    conv_ins: Vec<Array4<f64>>,
    conv_acts: Vec<Array4<f64>>,
    flat: Array2<f64>,
}

impl DiscLayout {
    pub fn build(spec: &NetworkSpec, ps: &mut ParamStore, rng: &mut ChaCha12Rng) -> Self {
        let mut convs = Vec::with_capacity(spec.num_blocks);
        let mut cin = 3;
        let mut cout = spec.base_channels;
        let mut size = spec.input_size;
        for i in 0..spec.num_blocks {
            convs.push(ConvLayer::init(ps, rng, &format!("conv{i}"), cin, cout, 3, 2, 1));
            size = ops::conv_out_size(size, 3, 2, 1).expect("validated spec");
            cin = cout;
            if i + 1 < spec.num_blocks {
                cout *= 2;
            }
        }
        let flat_dim = cin * size * size;
        let fc = DenseLayer::init(ps, rng, "fc", flat_dim, 1);
        DiscLayout {
            convs,
            fc,
            input_size: spec.input_size,
            flat_dim,
            final_channels: cin,
            final_size: size,
        }
    }

    /// img is (N,3,S,S) with S equal to the configured input size.
    pub fn forward_train(
        &self,
        ps: &ParamStore,
        img: &Array4<f64>,
    ) -> Result<(Array1<f64>, DiscCache)> {
        let (n, c, h, w) = img.dim();
        if c != 3 || h != self.input_size || w != self.input_size {
            return Err(Error::dimension(format!(
                "discriminator expects (N,3,{0},{0}), got ({n},{c},{h},{w})",
                self.input_size
            )));
        }
        let mut conv_ins = Vec::with_capacity(self.convs.len());
        let mut conv_acts = Vec::with_capacity(self.convs.len());
        let mut cur = img.clone();
        for conv in &self.convs {
            let act = ops::leaky_relu(&conv.forward(ps, &cur)?);
            conv_ins.push(cur);
            conv_acts.push(act.clone());
            cur = act;
        }
        let flat = cur
            .to_shape((n, self.flat_dim))
            .expect("contiguous activation")
            .to_owned();
        let logits_mat = self.fc.forward(ps, &flat);
        let logits = logits_mat.column(0).to_owned();
        Ok((logits, DiscCache { conv_ins, conv_acts, flat }))
    }

    /// Returns the gradient w.r.t. the input image batch.
    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &DiscCache,
        g_logits: &Array1<f64>,
        gs: &mut GradStore,
    ) -> Array4<f64> {
        let n = g_logits.len();
        let g_mat = g_logits.view().to_shape((n, 1)).expect("column").to_owned();
        let g_flat = self.fc.backward(ps, &cache.flat, &g_mat, gs);
        let mut g = g_flat
            .into_shape_with_order((n, self.final_channels, self.final_size, self.final_size))
            .expect("flat reshape");
        for (conv, (x_in, act)) in self
            .convs
            .iter()
            .zip(cache.conv_ins.iter().zip(cache.conv_acts.iter()))
            .rev()
        {
            let g_pre = ops::leaky_relu_backward(act, &g);
            g = conv.backward(ps, x_in, &g_pre, gs);
        }
        g
    }
}
