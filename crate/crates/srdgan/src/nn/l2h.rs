//! Low-to-high SR generator: RRDB trunk with a global skip, nearest-neighbour
//! upsampling stages with convs, and a linear output conv. No normalization
//! layers anywhere.

use ndarray::Array4;
use rand_chacha::ChaCha12Rng;

use super::layers::ConvLayer;
use super::ops;
use super::spec::NetworkSpec;
use super::store::{GradStore, ParamStore};
use crate::error::{Error, Result};

const RESIDUAL_SCALE: f64 = 0.2;

/// Residual dense block: 5 convs, each seeing all previous features.
#[derive(Debug, Clone)]
pub struct Rdb {
    convs: Vec<ConvLayer>,
    base: usize,
    growth: usize,
}

/// Forward cache: the full dense feature stack (N, C+4G, H, W).
/// Channels 0..C are the block input; C+iG..C+(i+1)G hold the post-activation
/// output of conv i+1. Every conv's input is a prefix of this stack.
pub struct RdbCache {
    stack: Array4<f64>,
}

impl Rdb {
    fn build(ps: &mut ParamStore, rng: &mut ChaCha12Rng, name: &str, c: usize, g: usize) -> Self {
        let mut convs = Vec::with_capacity(5);
        for i in 0..4 {
            convs.push(ConvLayer::init(
                ps,
                rng,
                &format!("{name}.conv{}", i + 1),
                c + i * g,
                g,
                3,
                1,
                1,
            ));
        }
        convs.push(ConvLayer::init(ps, rng, &format!("{name}.conv5"), c + 4 * g, c, 3, 1, 1));
        Rdb { convs, base: c, growth: g }
    }

    fn forward(&self, ps: &ParamStore, x: &Array4<f64>) -> Result<(Array4<f64>, RdbCache)> {
        let (n, _, h, w) = x.dim();
        let (c, g) = (self.base, self.growth);
        let mut stack = Array4::zeros((n, c + 4 * g, h, w));
        stack.slice_mut(ndarray::s![.., 0..c, .., ..]).assign(x);
        for i in 0..4 {
            let input = ops::channel_slice(&stack, 0, c + i * g);
            let act = ops::leaky_relu(&self.convs[i].forward(ps, &input)?);
            stack
                .slice_mut(ndarray::s![.., c + i * g..c + (i + 1) * g, .., ..])
                .assign(&act);
        }
        let x5 = self.convs[4].forward(ps, &stack)?;
        let out = x + &(x5 * RESIDUAL_SCALE);
        Ok((out, RdbCache { stack }))
    }

    fn backward(
        &self,
        ps: &ParamStore,
        cache: &RdbCache,
        gout: &Array4<f64>,
        gs: &mut GradStore,
    ) -> Array4<f64> {
        let (c, g) = (self.base, self.growth);
        let g_x5 = gout * RESIDUAL_SCALE;
        let mut g_stack = self.convs[4].backward(ps, &cache.stack, &g_x5, gs);
        for i in (0..4).rev() {
            let lo = c + i * g;
            let hi = c + (i + 1) * g;
            let g_feat = ops::channel_slice(&g_stack, lo, hi);
            let act = ops::channel_slice(&cache.stack, lo, hi);
            let g_pre = ops::leaky_relu_backward(&act, &g_feat);
            let input = ops::channel_slice(&cache.stack, 0, lo);
            let g_in = self.convs[i].backward(ps, &input, &g_pre, gs);
            g_stack.slice_mut(ndarray::s![.., 0..lo, .., ..]).zip_mut_with(&g_in, |a, &b| *a += b);
        }
        ops::channel_slice(&g_stack, 0, c) + gout
    }
}

/// Residual-in-residual dense block: 3 RDBs plus a scaled outer skip.
#[derive(Debug, Clone)]
pub struct Rrdb {
    rdbs: Vec<Rdb>,
}

pub struct RrdbCache {
    rdb_caches: Vec<RdbCache>,
}

impl Rrdb {
    fn build(ps: &mut ParamStore, rng: &mut ChaCha12Rng, name: &str, c: usize, g: usize) -> Self {
        Rrdb {
            rdbs: (0..3)
                .map(|i| Rdb::build(ps, rng, &format!("{name}.rdb{}", i + 1), c, g))
                .collect(),
        }
    }

    fn forward(&self, ps: &ParamStore, x: &Array4<f64>) -> Result<(Array4<f64>, RrdbCache)> {
        let mut caches = Vec::with_capacity(3);
        let mut cur = x.clone();
        for rdb in &self.rdbs {
            let (out, cache) = rdb.forward(ps, &cur)?;
            caches.push(cache);
            cur = out;
        }
        let out = x + &(cur * RESIDUAL_SCALE);
        Ok((out, RrdbCache { rdb_caches: caches }))
    }

    fn backward(
        &self,
        ps: &ParamStore,
        cache: &RrdbCache,
        gout: &Array4<f64>,
        gs: &mut GradStore,
    ) -> Array4<f64> {
        let mut g = gout * RESIDUAL_SCALE;
        for (rdb, c) in self.rdbs.iter().zip(cache.rdb_caches.iter()).rev() {
            g = rdb.backward(ps, c, &g, gs);
        }
        g + gout
    }
}

#[derive(Debug, Clone)]
pub struct L2hLayout {
    head: ConvLayer,
    rrdbs: Vec<Rrdb>,
    trunk: ConvLayer,
    ups: Vec<ConvLayer>,
    hr_conv: ConvLayer,
    last: ConvLayer,
    pub scale: usize,
}

pub struct L2hCache {
    input: Array4<f64>,
    rrdb_caches: Vec<RrdbCache>,
    /// Inputs to each RRDB (body[0] is the head output).
    body: Vec<Array4<f64>>,
    /// Per upsampling stage: (upsampled conv input, post-act output).
    up_stages: Vec<(Array4<f64>, Array4<f64>)>,
    hr_in: Array4<f64>,
    hr_act: Array4<f64>,
}

impl L2hLayout {
    pub fn build(spec: &NetworkSpec, ps: &mut ParamStore, rng: &mut ChaCha12Rng) -> Self {
        let c = spec.base_channels;
        let g = spec.growth_channels;
        let head = ConvLayer::init(ps, rng, "head", 3, c, 3, 1, 1);
        let rrdbs = (0..spec.num_blocks)
            .map(|i| Rrdb::build(ps, rng, &format!("rrdb{i}"), c, g))
            .collect();
        let trunk = ConvLayer::init(ps, rng, "trunk", c, c, 3, 1, 1);
        let n_ups = (spec.scale_factor as f64).log2() as usize;
        let ups = (0..n_ups)
            .map(|i| ConvLayer::init(ps, rng, &format!("up{i}"), c, c, 3, 1, 1))
            .collect();
        let hr_conv = ConvLayer::init(ps, rng, "hr", c, c, 3, 1, 1);
        let last = ConvLayer::init(ps, rng, "last", c, 3, 3, 1, 1);
        L2hLayout { head, rrdbs, trunk, ups, hr_conv, last, scale: spec.scale_factor }
    }

    /// lr is (N,3,h,w); output is (N,3,h*s,w*s), raw.
    pub fn forward_train(
        &self,
        ps: &ParamStore,
        lr: &Array4<f64>,
    ) -> Result<(Array4<f64>, L2hCache)> {
        let (_, c, _, _) = lr.dim();
        if c != 3 {
            return Err(Error::dimension(format!("L2H expects 3-channel input, got {c}")));
        }
        let head_out = self.head.forward(ps, lr)?;
        let mut body = vec![head_out.clone()];
        let mut rrdb_caches = Vec::with_capacity(self.rrdbs.len());
        for rrdb in &self.rrdbs {
            let (out, cache) = rrdb.forward(ps, body.last().expect("body non-empty"))?;
            rrdb_caches.push(cache);
            body.push(out);
        }
        let trunk_out = self.trunk.forward(ps, body.last().expect("body non-empty"))?;
        let feat = &head_out + &trunk_out;
        let mut cur = feat.clone();
        let mut up_stages = Vec::with_capacity(self.ups.len());
        for up in &self.ups {
            let upsampled = ops::upsample2x(&cur);
            let act = ops::leaky_relu(&up.forward(ps, &upsampled)?);
            up_stages.push((upsampled, act.clone()));
            cur = act;
        }
        let hr_in = cur;
        let hr_act = ops::leaky_relu(&self.hr_conv.forward(ps, &hr_in)?);
        let out = self.last.forward(ps, &hr_act)?;
        Ok((
            out,
            L2hCache { input: lr.clone(), rrdb_caches, body, up_stages, hr_in, hr_act },
        ))
    }

    /// Returns the gradient w.r.t. the LR input.
    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &L2hCache,
        gout: &Array4<f64>,
        gs: &mut GradStore,
    ) -> Array4<f64> {
        let g_hr_act = self.last.backward(ps, &cache.hr_act, gout, gs);
        let g_hr_pre = ops::leaky_relu_backward(&cache.hr_act, &g_hr_act);
        let mut g = self.hr_conv.backward(ps, &cache.hr_in, &g_hr_pre, gs);
        for (up, (upsampled, act)) in self.ups.iter().zip(cache.up_stages.iter()).rev() {
            let g_pre = ops::leaky_relu_backward(act, &g);
            let g_up = up.backward(ps, upsampled, &g_pre, gs);
            g = ops::upsample2x_backward(&g_up);
        }
        // g is now the gradient at feat = head_out + trunk_out
        let g_trunk_in = self.trunk.backward(ps, &cache.body[self.rrdbs.len()], &g, gs);
        let mut g_body = g_trunk_in;
        for (rrdb, c) in self.rrdbs.iter().zip(cache.rrdb_caches.iter()).rev() {
            g_body = rrdb.backward(ps, c, &g_body, gs);
        }
        // global skip adds the feat gradient to the head output gradient
        let g_head_out = &g_body + &g;
        self.head.backward(ps, &cache.input, &g_head_out, gs)
    }
}
