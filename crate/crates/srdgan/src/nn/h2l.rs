//! High-to-low degradation generator: head conv, a chain of ResBlocks with
//! long-range shortcuts summing every block input into the trunk, and a
//! strided output conv that performs the downscaling.

use ndarray::Array4;
use rand_chacha::ChaCha12Rng;

use super::layers::ConvLayer;
use super::ops;
use super::spec::NetworkSpec;
use super::store::{GradStore, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ResBlock {
    conv1: ConvLayer,
    conv2: ConvLayer,
}

#[derive(Debug, Clone)]
pub struct H2lLayout {
    head: ConvLayer,
    blocks: Vec<ResBlock>,
    tail: ConvLayer,
    pub scale: usize,
}

pub struct H2lCache {
    input: Array4<f64>,
    head_act: Array4<f64>,
    /// Per block: (post-act of conv1, post-act of conv2).
    block_acts: Vec<(Array4<f64>, Array4<f64>)>,
    /// xs[i] is block i's input; xs[num_blocks] is the last block's output.
    xs: Vec<Array4<f64>>,
    trunk: Array4<f64>,
}

impl H2lLayout {
    pub fn build(spec: &NetworkSpec, ps: &mut ParamStore, rng: &mut ChaCha12Rng) -> Self {
        let c = spec.base_channels;
        // 3 image channels + 1 noise channel
        let head = ConvLayer::init(ps, rng, "head", 4, c, 3, 1, 1);
        let blocks = (0..spec.num_blocks)
            .map(|i| ResBlock {
                conv1: ConvLayer::init(ps, rng, &format!("block{i}.conv1"), c, c, 3, 1, 1),
                conv2: ConvLayer::init(ps, rng, &format!("block{i}.conv2"), c, c, 3, 1, 1),
            })
            .collect();
        // downscale by using the factor as both kernel and stride
        let s = spec.scale_factor;
        let tail = ConvLayer::init(ps, rng, "tail", c, 3, s, s, 0);
        H2lLayout { head, blocks, tail, scale: s }
    }

    /// hr is (N,3,H,W), noise is (N,1,H,W); output is (N,3,H/s,W/s), raw.
    pub fn forward_train(
        &self,
        ps: &ParamStore,
        hr: &Array4<f64>,
        noise: &Array4<f64>,
    ) -> Result<(Array4<f64>, H2lCache)> {
        let (n, c, h, w) = hr.dim();
        let (nn, nc, nh, nw) = noise.dim();
        if c != 3 {
            return Err(Error::dimension(format!("H2L expects 3-channel input, got {c}")));
        }
        if (nn, nc, nh, nw) != (n, 1, h, w) {
            return Err(Error::dimension(format!(
                "noise plane must be ({n},1,{h},{w}), got ({nn},{nc},{nh},{nw})"
            )));
        }
        if h % self.scale != 0 || w % self.scale != 0 {
            return Err(Error::dimension(format!(
                "H2L input {h}x{w} not divisible by scale {}",
                self.scale
            )));
        }
        let input = ops::concat_channels(&[hr, noise]);
        let head_act = ops::leaky_relu(&self.head.forward(ps, &input)?);
        let mut xs = vec![head_act.clone()];
        let mut block_acts = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let x = xs.last().expect("xs non-empty");
            let a1 = ops::leaky_relu(&block.conv1.forward(ps, x)?);
            let a2 = ops::leaky_relu(&block.conv2.forward(ps, &a1)?);
            let out = x + &a2;
            block_acts.push((a1, a2));
            xs.push(out);
        }
        // long-range shortcuts: every block input is summed into the trunk
        let mut trunk = xs[self.blocks.len()].clone();
        for x in xs.iter().take(self.blocks.len()) {
            trunk += x;
        }
        let out = self.tail.forward(ps, &trunk)?;
        Ok((
            out,
            H2lCache { input, head_act, block_acts, xs, trunk },
        ))
    }

    /// Returns (grad_hr, grad_noise).
    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &H2lCache,
        gout: &Array4<f64>,
        gs: &mut GradStore,
    ) -> (Array4<f64>, Array4<f64>) {
        let g_trunk = self.tail.backward(ps, &cache.trunk, gout, gs);
        let n_blocks = self.blocks.len();
        // gradient flowing into each xs entry; last block output first
        let mut g_x = g_trunk.clone();
        for i in (0..n_blocks).rev() {
            let (a1, a2) = &cache.block_acts[i];
            let x_in = &cache.xs[i];
            let g_a2 = ops::leaky_relu_backward(a2, &g_x);
            let g_a1 = self.blocks[i].conv2.backward(ps, a1, &g_a2, gs);
            let g_pre1 = ops::leaky_relu_backward(a1, &g_a1);
            let g_conv_path = self.blocks[i].conv1.backward(ps, x_in, &g_pre1, gs);
            // identity skip + conv path + long-range shortcut into the trunk
            g_x = &g_x + &g_conv_path + &g_trunk;
        }
        let g_pre_head = ops::leaky_relu_backward(&cache.head_act, &g_x);
        let g_input = self.head.backward(ps, &cache.input, &g_pre_head, gs);
        let g_hr = ops::channel_slice(&g_input, 0, 3);
        let g_noise = ops::channel_slice(&g_input, 3, 4);
        (g_hr, g_noise)
    }
}
