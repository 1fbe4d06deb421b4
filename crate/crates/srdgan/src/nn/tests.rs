use ndarray::{Array1, Array2, Array4, ArrayView4, Ix4};
use rand::Rng;

use super::*;
use crate::seed;

fn rand4(dim: (usize, usize, usize, usize), sd: u64) -> Array4<f64> {
    let mut rng = seed::rng(sd);
    Array4::from_shape_simple_fn(dim, || rng.gen_range(0.0..1.0))
}

fn tiny_h2l() -> NetworkState {
    let spec = NetworkSpec::h2l_default()
        .with_base_channels(4)
        .with_num_blocks(2)
        .with_scale_factor(2);
    build_network(&spec, 5).unwrap()
}

fn tiny_l2h() -> NetworkState {
    let spec = NetworkSpec::l2h_default()
        .with_base_channels(4)
        .with_num_blocks(2)
        .with_growth_channels(2)
        .with_scale_factor(4);
    build_network(&spec, 6).unwrap()
}

#[test]
fn rebuild_with_same_seed_reproduces_hashes() {
    let spec = NetworkSpec::h2l_default();
    let a = build_network(&spec, 42).unwrap();
    let b = build_network(&spec, 42).unwrap();
    assert_eq!(a.param_hash(), b.param_hash());
    let c = build_network(&spec, 43).unwrap();
    assert_ne!(a.param_hash(), c.param_hash());
}

#[test]
fn h2l_shape_contract_and_purity() {
    let net = tiny_h2l();
    let hr = rand4((1, 3, 12, 16), 1);
    let noise = rand4((1, 1, 12, 16), 2);
    let out = net.h2l_forward_batch(&hr, &noise).unwrap();
    assert_eq!(out.dim(), (1, 3, 6, 8));
    let again = net.h2l_forward_batch(&hr, &noise).unwrap();
    assert_eq!(out, again);
}

#[test]
fn h2l_rejects_bad_shapes() {
    let net = tiny_h2l();
    let hr = rand4((1, 3, 13, 16), 1); // not divisible by 2
    let noise = rand4((1, 1, 13, 16), 2);
    assert!(matches!(
        net.h2l_forward_batch(&hr, &noise),
        Err(Error::Dimension(_))
    ));
    let hr = rand4((1, 3, 12, 16), 1);
    let noise = rand4((1, 1, 8, 16), 2); // noise dims differ
    assert!(matches!(
        net.h2l_forward_batch(&hr, &noise),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn h2l_zero_params_zero_noise_gives_zero_output() {
    let mut net = tiny_h2l();
    for p in net.params.iter_mut() {
        p.value.fill(0.0);
    }
    let hr = rand4((1, 3, 8, 8), 3);
    let noise = Array4::zeros((1, 1, 8, 8));
    let out = net.h2l_forward_batch(&hr, &noise).unwrap();
    assert!(out.iter().all(|&v| v == 0.0));
}

#[test]
fn l2h_shape_contract_and_composition() {
    let l2h = tiny_l2h();
    let lr = rand4((1, 3, 12, 12), 4);
    let out = l2h.l2h_forward_batch(&lr).unwrap();
    assert_eq!(out.dim(), (1, 3, 48, 48));

    // composing H2L (scale s) with L2H (scale s) is spatially the identity
    let spec = NetworkSpec::h2l_default()
        .with_base_channels(4)
        .with_num_blocks(1)
        .with_scale_factor(4);
    let h2l = build_network(&spec, 9).unwrap();
    let hr = rand4((1, 3, 16, 16), 5);
    let noise = rand4((1, 1, 16, 16), 6);
    let lr2 = h2l.h2l_forward_batch(&hr, &noise).unwrap();
    assert_eq!(lr2.dim(), (1, 3, 4, 4));
    let back = l2h.l2h_forward_batch(&lr2).unwrap();
    assert_eq!(back.dim(), hr.dim());
}

#[test]
fn l2h_default_param_count_matches_closed_form() {
    // analytic shape-count oracle for the 25-RRDB default
    let spec = NetworkSpec::l2h_default();
    let (c, g, blocks) = (spec.base_channels, spec.growth_channels, spec.num_blocks);
    let conv = |cin: usize, cout: usize, k: usize| cin * cout * k * k + cout;
    let rdb: usize = (0..4).map(|i| conv(c + i * g, g, 3)).sum::<usize>() + conv(c + 4 * g, c, 3);
    let rrdb = 3 * rdb;
    let n_ups = 2; // scale 4 -> two x2 stages
    let expect = conv(3, c, 3)
        + blocks * rrdb
        + conv(c, c, 3)
        + n_ups * conv(c, c, 3)
        + conv(c, c, 3)
        + conv(c, 3, 3);
    let net = build_network(&spec, 0).unwrap();
    assert_eq!(net.param_count(), expect);
}

#[test]
fn h2l_param_count_matches_closed_form() {
    let spec = NetworkSpec::h2l_default();
    let (c, blocks, s) = (spec.base_channels, spec.num_blocks, spec.scale_factor);
    let conv = |cin: usize, cout: usize, k: usize| cin * cout * k * k + cout;
    let expect = conv(4, c, 3) + blocks * 2 * conv(c, c, 3) + conv(c, 3, s);
    let net = build_network(&spec, 0).unwrap();
    assert_eq!(net.param_count(), expect);
}

/// Independent straight-line re-implementation of the tiny L2H forward,
/// reading weights by name and convolving with a naive quadruple loop.
mod straight_line {
    use super::*;

    pub fn conv_naive(
        x: &Array4<f64>,
        w: ArrayView4<f64>,
        b: &Array1<f64>,
        stride: usize,
        pad: usize,
    ) -> Array4<f64> {
        let (n, cin, h, width) = x.dim();
        let (cout, _, k, _) = w.dim();
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (width + 2 * pad - k) / stride + 1;
        let mut y = Array4::zeros((n, cout, oh, ow));
        for ni in 0..n {
            for co in 0..cout {
                for ho in 0..oh {
                    for wo in 0..ow {
                        let mut acc = b[co];
                        for ci in 0..cin {
                            for kh in 0..k {
                                for kw in 0..k {
                                    let ih = (ho * stride + kh) as i64 - pad as i64;
                                    let iw = (wo * stride + kw) as i64 - pad as i64;
                                    if ih >= 0
                                        && iw >= 0
                                        && (ih as usize) < h
                                        && (iw as usize) < width
                                    {
                                        acc += w[[co, ci, kh, kw]]
                                            * x[[ni, ci, ih as usize, iw as usize]];
                                    }
                                }
                            }
                        }
                        y[[ni, co, ho, wo]] = acc;
                    }
                }
            }
        }
        y
    }

    pub fn lrelu(x: &Array4<f64>) -> Array4<f64> {
        x.mapv(|v| if v >= 0.0 { v } else { 0.2 * v })
    }

    pub fn up2(x: &Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let mut y = Array4::zeros((n, c, 2 * h, 2 * w));
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

    pub struct Params<'a>(pub &'a ParamStore);

    impl Params<'_> {
        pub fn w(&self, name: &str) -> ArrayView4<'_, f64> {
            let id = self
                .0
                .iter()
                .position(|e| e.name == format!("{name}.w"))
                .unwrap_or_else(|| panic!("missing {name}.w"));
            self.0
                .get(id)
                .view()
                .into_dimensionality::<Ix4>()
                .expect("conv weight")
        }

        pub fn b(&self, name: &str) -> Array1<f64> {
            let id = self
                .0
                .iter()
                .position(|e| e.name == format!("{name}.b"))
                .unwrap_or_else(|| panic!("missing {name}.b"));
            Array1::from_iter(self.0.get(id).iter().copied())
        }

        pub fn conv(&self, name: &str, x: &Array4<f64>, stride: usize, pad: usize) -> Array4<f64> {
            conv_naive(x, self.w(name), &self.b(name), stride, pad)
        }
    }

    pub fn rdb(p: &Params, prefix: &str, x: &Array4<f64>) -> Array4<f64> {
        let mut feats = vec![x.clone()];
        for i in 1..=4 {
            let views: Vec<&Array4<f64>> = feats.iter().collect();
            let cat = ops::concat_channels(&views);
            feats.push(lrelu(&p.conv(&format!("{prefix}.conv{i}"), &cat, 1, 1)));
        }
        let views: Vec<&Array4<f64>> = feats.iter().collect();
        let cat = ops::concat_channels(&views);
        let x5 = p.conv(&format!("{prefix}.conv5"), &cat, 1, 1);
        x + &(x5 * 0.2)
    }

    pub fn rrdb(p: &Params, prefix: &str, x: &Array4<f64>) -> Array4<f64> {
        let r1 = rdb(p, &format!("{prefix}.rdb1"), x);
        let r2 = rdb(p, &format!("{prefix}.rdb2"), &r1);
        let r3 = rdb(p, &format!("{prefix}.rdb3"), &r2);
        x + &(r3 * 0.2)
    }

    pub fn l2h_forward(net: &NetworkState, lr: &Array4<f64>) -> Array4<f64> {
        let p = Params(&net.params);
        let f0 = p.conv("head", lr, 1, 1);
        let mut body = f0.clone();
        for i in 0..net.spec.num_blocks {
            body = rrdb(&p, &format!("rrdb{i}"), &body);
        }
        let feat = &f0 + &p.conv("trunk", &body, 1, 1);
        let mut cur = feat;
        let n_ups = (net.spec.scale_factor as f64).log2() as usize;
        for i in 0..n_ups {
            cur = lrelu(&p.conv(&format!("up{i}"), &up2(&cur), 1, 1));
        }
        let h = lrelu(&p.conv("hr", &cur, 1, 1));
        p.conv("last", &h, 1, 1)
    }
}

#[test]
fn tiny_l2h_matches_straight_line_reference() {
    let net = tiny_l2h();
    let lr = rand4((1, 3, 6, 6), 17);
    let got = net.l2h_forward_batch(&lr).unwrap();
    let want = straight_line::l2h_forward(&net, &lr);
    assert_eq!(got.dim(), want.dim());
    let max_err = got
        .iter()
        .zip(want.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(max_err < 1e-5, "max deviation {max_err}");
}

#[test]
fn discriminator_zero_params_gives_probability_half() {
    let spec = NetworkSpec::discriminator_for(8).with_base_channels(2);
    let mut net = build_network(&spec, 3).unwrap();
    for p in net.params.iter_mut() {
        p.value.fill(0.0);
    }
    let img = rand4((2, 3, 8, 8), 8);
    let logits = net.disc_forward_batch(&img).unwrap();
    assert!(logits.iter().all(|&l| l == 0.0));
    assert_eq!(sigmoid(0.0), 0.5);
}

#[test]
fn discriminator_is_deterministic_and_checks_size() {
    let spec = NetworkSpec::discriminator_for(8).with_base_channels(2);
    let net = build_network(&spec, 3).unwrap();
    let img = rand4((2, 3, 8, 8), 9);
    assert_eq!(
        net.disc_forward_batch(&img).unwrap(),
        net.disc_forward_batch(&img).unwrap()
    );
    let wrong = rand4((1, 3, 10, 10), 9);
    assert!(matches!(
        net.disc_forward_batch(&wrong),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn discriminator_input_gradient_matches_finite_difference() {
    let spec = NetworkSpec::discriminator_for(8).with_base_channels(2);
    let net = build_network(&spec, 3).unwrap();
    let layout = net.as_disc().unwrap();
    let img = rand4((1, 3, 8, 8), 10);

    let (_, cache) = layout.forward_train(&net.params, &img).unwrap();
    let mut gs = GradStore::zeros_like(&net.params);
    let g_img = layout.backward(&net.params, &cache, &Array1::ones(1), &mut gs);

    let eps = 1e-4;
    for &idx in &[[0usize, 0, 0, 0], [0, 1, 4, 3], [0, 2, 7, 7]] {
        let mut x = img.clone();
        x[idx] += eps;
        let fp = net.disc_forward_batch(&x).unwrap()[0];
        x[idx] -= 2.0 * eps;
        let fm = net.disc_forward_batch(&x).unwrap()[0];
        let num = (fp - fm) / (2.0 * eps);
        let ana = g_img[idx];
        let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(1e-8);
        assert!(rel < 1e-3, "pixel {idx:?}: analytic {ana} vs numeric {num}");
    }
}

#[test]
fn feature_shapes_follow_the_layer_calculus() {
    let fx = FeatureExtractor::from_seed(4, 5, 12).unwrap();
    let img = rand4((1, 3, 16, 16), 13);
    let out = fx.forward_batch(&img).unwrap();
    let expect_c = feature::layer_channels(4, 4);
    let expect_s = feature::layer_size(16, 4);
    assert_eq!(out.dim(), (1, expect_c, expect_s, expect_s));

    for tap in 1..=5 {
        let fx = FeatureExtractor::from_seed(4, tap, 12).unwrap();
        let out = fx.forward_batch(&img).unwrap();
        assert_eq!(
            out.dim(),
            (1, feature::layer_channels(4, tap - 1), feature::layer_size(16, tap - 1), feature::layer_size(16, tap - 1)),
            "tap {tap}"
        );
    }
}

#[test]
fn features_are_deterministic() {
    let fx = FeatureExtractor::from_seed(4, 3, 14).unwrap();
    let img = rand4((1, 3, 12, 12), 15);
    assert_eq!(fx.forward_batch(&img).unwrap(), fx.forward_batch(&img).unwrap());
}

#[test]
fn perturbing_a_pixel_only_touches_covering_receptive_fields() {
    let fx = FeatureExtractor::from_seed(4, 4, 16).unwrap();
    let img = rand4((1, 3, 16, 16), 17);
    let base = fx.forward_batch(&img).unwrap();

    let (pr, pc) = (9usize, 6usize);
    let mut bumped = img.clone();
    bumped[[0, 1, pr, pc]] += 0.25;
    let after = fx.forward_batch(&bumped).unwrap();

    let (span, jump, offset) = feature::receptive_field(4);
    let (_, c, fh, fw) = base.dim();
    let mut changed_inside = false;
    for ch in 0..c {
        for i in 0..fh {
            for j in 0..fw {
                let row_lo = i as i64 * jump + offset;
                let col_lo = j as i64 * jump + offset;
                let covers = (row_lo..row_lo + span).contains(&(pr as i64))
                    && (col_lo..col_lo + span).contains(&(pc as i64));
                let delta = (base[[0, ch, i, j]] - after[[0, ch, i, j]]).abs();
                if covers {
                    changed_inside |= delta > 0.0;
                } else {
                    assert_eq!(delta, 0.0, "feature ({ch},{i},{j}) outside RF changed");
                }
            }
        }
    }
    assert!(changed_inside, "no covered feature reacted to the perturbation");
}

/// Full-parameter finite-difference check of a scalar loss for a network.
fn grad_check_params<F>(params: &mut ParamStore, analytic: &GradStore, mut loss_fn: F, tol: f64)
where
    F: FnMut(&ParamStore) -> f64,
{
    let eps = 1e-4;
    let mut checked = 0usize;
    let mut failed = 0usize;
    for id in 0..params.len() {
        let len = params.get(id).len();
        for k in 0..len {
            let orig = params.get(id).as_slice().unwrap()[k];
            params.get_mut(id).as_slice_mut().unwrap()[k] = orig + eps;
            let fp = loss_fn(params);
            params.get_mut(id).as_slice_mut().unwrap()[k] = orig - eps;
            let fm = loss_fn(params);
            params.get_mut(id).as_slice_mut().unwrap()[k] = orig;
            let num = (fp - fm) / (2.0 * eps);
            let ana = analytic.get(id).as_slice().unwrap()[k];
            let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(1e-6);
            checked += 1;
            if rel > tol {
                failed += 1;
            }
        }
    }
    let frac_ok = 1.0 - failed as f64 / checked as f64;
    assert!(frac_ok >= 0.99, "{failed}/{checked} coordinates off tolerance");
}

#[test]
fn h2l_parameter_gradients_match_finite_differences() {
    let spec = NetworkSpec::h2l_default()
        .with_base_channels(3)
        .with_num_blocks(1)
        .with_scale_factor(2);
    let mut net = build_network(&spec, 30).unwrap();
    let hr = rand4((1, 3, 6, 6), 31);
    let noise = rand4((1, 1, 6, 6), 32);
    let target = rand4((1, 3, 3, 3), 33);

    let layout = net.as_h2l().unwrap().clone();
    let (out, cache) = layout.forward_train(&net.params, &hr, &noise).unwrap();
    let (_, g_out) = crate::losses::pixel_loss_grad(&out, &target).unwrap();
    let mut gs = GradStore::zeros_like(&net.params);
    layout.backward(&net.params, &cache, &g_out, &mut gs);

    grad_check_params(
        &mut net.params,
        &gs,
        |ps| {
            let (o, _) = layout.forward_train(ps, &hr, &noise).unwrap();
            crate::losses::pixel_loss(&o, &target).unwrap()
        },
        1e-3,
    );
}

#[test]
fn l2h_parameter_gradients_match_finite_differences() {
    let spec = NetworkSpec::l2h_default()
        .with_base_channels(2)
        .with_num_blocks(1)
        .with_growth_channels(2)
        .with_scale_factor(2);
    let mut net = build_network(&spec, 40).unwrap();
    let lr = rand4((1, 3, 4, 4), 41);
    let target = rand4((1, 3, 8, 8), 42);

    let layout = net.as_l2h().unwrap().clone();
    let (out, cache) = layout.forward_train(&net.params, &lr).unwrap();
    let (_, g_out) = crate::losses::pixel_loss_grad(&out, &target).unwrap();
    let mut gs = GradStore::zeros_like(&net.params);
    layout.backward(&net.params, &cache, &g_out, &mut gs);

    grad_check_params(
        &mut net.params,
        &gs,
        |ps| {
            let (o, _) = layout.forward_train(ps, &lr).unwrap();
            crate::losses::pixel_loss(&o, &target).unwrap()
        },
        1e-3,
    );
}

#[test]
fn flatten_batch_shapes() {
    let x = rand4((2, 3, 4, 4), 50);
    let flat: Array2<f64> = flatten_batch(&x);
    assert_eq!(flat.dim(), (2, 48));
    assert_eq!(flat[[1, 0]], x[[1, 0, 0, 0]]);
}
