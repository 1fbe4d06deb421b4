//! Layer wrappers binding ops to parameters in a `ParamStore`.

use ndarray::{Array1, Array2, Array4, ArrayD};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use super::ops;
use super::store::{GradStore, ParamId, ParamStore};
use crate::error::Result;

/// Kaiming-normal draw for LeakyReLU(0.2) fan-in.
fn kaiming(rng: &mut ChaCha12Rng, fan_in: usize, shape: &[usize]) -> ArrayD<f64> {
    let std = (2.0 / ((1.0 + ops::LEAKY_SLOPE * ops::LEAKY_SLOPE) * fan_in as f64)).sqrt();
    let normal = Normal::new(0.0, std).expect("valid std");
    ArrayD::from_shape_simple_fn(shape.to_vec(), || normal.sample(rng))
}

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl ConvLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        ps: &mut ParamStore,
        rng: &mut ChaCha12Rng,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let w = kaiming(rng, cin * kernel * kernel, &[cout, cin, kernel, kernel]);
        let wid = ps.add(format!("{name}.w"), w);
        let bid = ps.add(format!("{name}.b"), ArrayD::zeros(vec![cout]));
        ConvLayer { w: wid, b: bid, stride, pad }
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array4<f64>) -> Result<Array4<f64>> {
        let b = ps.view1(self.b).to_owned();
        ops::conv2d_forward(x, &ps.view4(self.w), &b, self.stride, self.pad)
    }

    /// Backward accumulating parameter grads; returns the input gradient.
    pub fn backward(
        &self,
        ps: &ParamStore,
        x: &Array4<f64>,
        gout: &Array4<f64>,
        gs: &mut GradStore,
    ) -> Array4<f64> {
        let grads = ops::conv2d_backward(x, &ps.view4(self.w), self.stride, self.pad, gout, true);
        gs.accum(self.w, &grads.weight.into_dyn());
        gs.accum(self.b, &grads.bias.into_dyn());
        grads.input
    }

    /// Input gradient only (used by the fixed feature extractor).
    pub fn backward_input(&self, ps: &ParamStore, x: &Array4<f64>, gout: &Array4<f64>) -> Array4<f64> {
        ops::conv2d_backward(x, &ps.view4(self.w), self.stride, self.pad, gout, true).input
    }
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl DenseLayer {
    pub fn init(
        ps: &mut ParamStore,
        rng: &mut ChaCha12Rng,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let w = kaiming(rng, in_dim, &[out_dim, in_dim]);
        let wid = ps.add(format!("{name}.w"), w);
        let bid = ps.add(format!("{name}.b"), ArrayD::zeros(vec![out_dim]));
        DenseLayer { w: wid, b: bid, in_dim, out_dim }
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>) -> Array2<f64> {
        let w = ps.view2(self.w).to_owned();
        let b: Array1<f64> = ps.view1(self.b).to_owned();
        ops::dense_forward(x, &w, &b)
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        x: &Array2<f64>,
        gout: &Array2<f64>,
        gs: &mut GradStore,
    ) -> Array2<f64> {
        let w = ps.view2(self.w).to_owned();
        let grads = ops::dense_backward(x, &w, gout);
        gs.accum(self.w, &grads.weight.into_dyn());
        gs.accum(self.b, &grads.bias.into_dyn());
        grads.input
    }
}
