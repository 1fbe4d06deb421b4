//! Low-level differentiable operations on (N, C, H, W) batches.
//!
//! Convolutions go through im2col + GEMM; every op has an explicit adjoint
//! so the training engine and the finite-difference suite can agree on
//! plain functions rather than a tape.

use ndarray::{s, Array1, Array2, Array4, ArrayView4};

use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Output spatial size of a convolution.
pub fn conv_out_size(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if padded < kernel {
        return Err(Error::dimension(format!(
            "input {input} (pad {pad}) smaller than kernel {kernel}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Unfold one sample into a (C*K*K, Ho*Wo) patch matrix.
fn im2col(
    x: &ArrayView4<f64>,
    n: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array2<f64> {
    let (_, c, h, w) = x.dim();
    let mut col = Array2::zeros((c * kernel * kernel, oh * ow));
    for ci in 0..c {
        for kh in 0..kernel {
            for kw in 0..kernel {
                let row = (ci * kernel + kh) * kernel + kw;
                for ho in 0..oh {
                    let ih = (ho * stride + kh) as i64 - pad as i64;
                    if ih < 0 || ih >= h as i64 {
                        continue;
                    }
                    for wo in 0..ow {
                        let iw = (wo * stride + kw) as i64 - pad as i64;
                        if iw < 0 || iw >= w as i64 {
                            continue;
                        }
                        col[[row, ho * ow + wo]] = x[[n, ci, ih as usize, iw as usize]];
                    }
                }
            }
        }
    }
    col
}

/// Scatter-add a patch-matrix gradient back onto the input grid.
fn col2im_accum(
    gx: &mut Array4<f64>,
    gcol: &Array2<f64>,
    n: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) {
    let (_, c, h, w) = gx.dim();
    for ci in 0..c {
        for kh in 0..kernel {
            for kw in 0..kernel {
                let row = (ci * kernel + kh) * kernel + kw;
                for ho in 0..oh {
                    let ih = (ho * stride + kh) as i64 - pad as i64;
                    if ih < 0 || ih >= h as i64 {
                        continue;
                    }
                    for wo in 0..ow {
                        let iw = (wo * stride + kw) as i64 - pad as i64;
                        if iw < 0 || iw >= w as i64 {
                            continue;
                        }
                        gx[[n, ci, ih as usize, iw as usize]] += gcol[[row, ho * ow + wo]];
                    }
                }
            }
        }
    }
}

/// y[n,co,ho,wo] = b[co] + sum over (ci,kh,kw) of w * x.
pub fn conv2d_forward(
    x: &Array4<f64>,
    w: &ArrayView4<f64>,
    b: &Array1<f64>,
    stride: usize,
    pad: usize,
) -> Result<Array4<f64>> {
    let (n, cin, h, width) = x.dim();
    let (cout, cin_w, k, k2) = w.dim();
    debug_assert_eq!(k, k2);
    if cin != cin_w {
        return Err(Error::dimension(format!(
            "conv expects {cin_w} input channels, got {cin}"
        )));
    }
    let oh = conv_out_size(h, k, stride, pad)?;
    let ow = conv_out_size(width, k, stride, pad)?;
    let w_mat = w
        .to_shape((cout, cin * k * k))
        .expect("weight reshape is contiguous")
        .to_owned();
    let mut y = Array4::zeros((n, cout, oh, ow));
    let xv = x.view();
    for ni in 0..n {
        let col = im2col(&xv, ni, k, stride, pad, oh, ow);
        let y_mat = w_mat.dot(&col);
        for co in 0..cout {
            for ho in 0..oh {
                for wo in 0..ow {
                    y[[ni, co, ho, wo]] = y_mat[[co, ho * ow + wo]] + b[co];
                }
            }
        }
    }
    Ok(y)
}

pub struct ConvGrads {
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
    pub input: Array4<f64>,
}

/// Adjoint of `conv2d_forward`. `x` is the forward input.
pub fn conv2d_backward(
    x: &Array4<f64>,
    w: &ArrayView4<f64>,
    stride: usize,
    pad: usize,
    gout: &Array4<f64>,
    need_input_grad: bool,
) -> ConvGrads {
    let (n, cin, _h, _w) = x.dim();
    let (cout, _, k, _) = w.dim();
    let (_, _, oh, ow) = gout.dim();
    let w_mat = w
        .to_shape((cout, cin * k * k))
        .expect("weight reshape is contiguous")
        .to_owned();
    let mut gw_mat = Array2::<f64>::zeros((cout, cin * k * k));
    let mut gb = Array1::<f64>::zeros(cout);
    let mut gx = Array4::<f64>::zeros(x.dim());
    let xv = x.view();
    for ni in 0..n {
        let col = im2col(&xv, ni, k, stride, pad, oh, ow);
        let mut gy_mat = Array2::<f64>::zeros((cout, oh * ow));
        for co in 0..cout {
            for ho in 0..oh {
                for wo in 0..ow {
                    let g = gout[[ni, co, ho, wo]];
                    gy_mat[[co, ho * ow + wo]] = g;
                    gb[co] += g;
                }
            }
        }
        gw_mat = gw_mat + gy_mat.dot(&col.t());
        if need_input_grad {
            let gcol = w_mat.t().dot(&gy_mat);
            col2im_accum(&mut gx, &gcol, ni, k, stride, pad, oh, ow);
        }
    }
    let gw = gw_mat
        .into_shape_with_order((cout, cin, k, k))
        .expect("grad reshape");
    ConvGrads { weight: gw, bias: gb, input: gx }
}

/// y = x W^T + b over flattened samples; x is (N, D), w is (O, D).
pub fn dense_forward(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(&w.t()) + b
}

pub struct DenseGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub input: Array2<f64>,
}

pub fn dense_backward(x: &Array2<f64>, w: &Array2<f64>, gout: &Array2<f64>) -> DenseGrads {
    DenseGrads {
        weight: gout.t().dot(x),
        bias: gout.sum_axis(ndarray::Axis(0)),
        input: gout.dot(w),
    }
}

pub fn leaky_relu(x: &Array4<f64>) -> Array4<f64> {
    x.mapv(|v| if v >= 0.0 { v } else { LEAKY_SLOPE * v })
}

/// Adjoint of leaky_relu given the forward *output* (sign-equivalent to input).
pub fn leaky_relu_backward(y: &Array4<f64>, gout: &Array4<f64>) -> Array4<f64> {
    let mut g = gout.clone();
    g.zip_mut_with(y, |gv, &yv| {
        if yv < 0.0 {
            *gv *= LEAKY_SLOPE;
        }
    });
    g
}

pub fn upsample2x(x: &Array4<f64>) -> Array4<f64> {
    let (n, c, h, w) = x.dim();
    let mut y = Array4::zeros((n, c, h * 2, w * 2));
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..2 * h {
                for j in 0..2 * w {
                    y[[ni, ci, i, j]] = x[[ni, ci, i / 2, j / 2]];
                }
            }
        }
    }
    y
}

pub fn upsample2x_backward(gout: &Array4<f64>) -> Array4<f64> {
    let (n, c, h2, w2) = gout.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut gx = Array4::zeros((n, c, h, w));
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..h2 {
                for j in 0..w2 {
                    gx[[ni, ci, i / 2, j / 2]] += gout[[ni, ci, i, j]];
                }
            }
        }
    }
    gx
}

/// Concatenate along the channel axis.
pub fn concat_channels(parts: &[&Array4<f64>]) -> Array4<f64> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(ndarray::Axis(1), &views).expect("channel concat")
}

/// Slice a channel range out of a batch (owned copy).
pub fn channel_slice(x: &Array4<f64>, lo: usize, hi: usize) -> Array4<f64> {
    x.slice(s![.., lo..hi, .., ..]).to_owned()
}
