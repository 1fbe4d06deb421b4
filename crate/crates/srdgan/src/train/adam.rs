//! Bias-corrected Adam with optional decoupled-from-nothing plain L2
//! weight decay (zero by default).

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{GradStore, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { beta1: 0.9, beta2: 0.999, weight_decay: 0.0, epsilon: 1e-8 }
    }
}

/// Per-network optimizer moments, aligned with the parameter store.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<ArrayD<f64>>,
    pub v: Vec<ArrayD<f64>>,
}

impl AdamState {
    pub fn zeros_like(params: &ParamStore) -> Self {
        AdamState {
            t: 0,
            m: params.iter().map(|e| ArrayD::zeros(e.value.raw_dim())).collect(),
            v: params.iter().map(|e| ArrayD::zeros(e.value.raw_dim())).collect(),
        }
    }
}

/// One Adam update over every parameter in the store. Non-finite gradients
/// abort with the offending parameter's name.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &GradStore,
    state: &mut AdamState,
    lr: f64,
    hyper: &AdamHyper,
    iteration: u64,
) -> Result<()> {
    for (id, g) in grads.iter().enumerate() {
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric {
                iteration,
                detail: format!("non-finite gradient for parameter '{}'", params.name(id)),
            });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    for id in 0..params.len() {
        let g = grads.get(id);
        let p = params.get_mut(id);
        let m = &mut state.m[id];
        let v = &mut state.v[id];
        ndarray::Zip::from(p)
            .and(m)
            .and(v)
            .and(g)
            .for_each(|pv, mv, vv, &gv| {
                let grad = gv + hyper.weight_decay * *pv;
                *mv = hyper.beta1 * *mv + (1.0 - hyper.beta1) * grad;
                *vv = hyper.beta2 * *vv + (1.0 - hyper.beta2) * grad * grad;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + hyper.epsilon);
            });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_network, NetworkSpec};

    fn tiny_store() -> ParamStore {
        let spec = NetworkSpec::discriminator_for(8).with_base_channels(2);
        build_network(&spec, 1).unwrap().params
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = tiny_store();
        let before = params.content_hash();
        let grads = GradStore::zeros_like(&params);
        let mut state = AdamState::zeros_like(&params);
        adam_step(&mut params, &grads, &mut state, 1e-3, &AdamHyper::default(), 0).unwrap();
        assert_eq!(params.content_hash(), before);
    }

    #[test]
    fn single_step_magnitude_is_bias_corrected_lr() {
        // closed form: with constant gradient g at t=1, m_hat = g and
        // v_hat = g^2, so the update is lr * g / (|g| + eps) ~ lr * sign(g)
        let mut params = tiny_store();
        let before: Vec<f64> = params.iter().flat_map(|e| e.value.iter().copied()).collect();
        let mut grads = GradStore::zeros_like(&params);
        for id in 0..params.len() {
            let shape = params.get(id).raw_dim();
            grads.accum(id, &ArrayD::from_elem(shape, 0.37));
        }
        let mut state = AdamState::zeros_like(&params);
        let lr = 1e-3;
        adam_step(&mut params, &grads, &mut state, lr, &AdamHyper::default(), 0).unwrap();
        let after: Vec<f64> = params.iter().flat_map(|e| e.value.iter().copied()).collect();
        for (b, a) in before.iter().zip(after.iter()) {
            let delta = b - a;
            assert!((delta - lr).abs() < 1e-6, "step {delta} vs lr {lr}");
        }
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut params = tiny_store();
        let mut grads = GradStore::zeros_like(&params);
        let shape = params.get(2).raw_dim();
        grads.accum(2, &ArrayD::from_elem(shape, f64::NAN));
        let mut state = AdamState::zeros_like(&params);
        match adam_step(&mut params, &grads, &mut state, 1e-3, &AdamHyper::default(), 7) {
            Err(Error::Numeric { iteration, detail }) => {
                assert_eq!(iteration, 7);
                let expected = params.name(2);
                assert!(detail.contains(expected), "{detail}");
            }
            other => panic!("expected NumericError, got {other:?}"),
        }
    }

    #[test]
    fn two_steps_equal_resumed_two_steps() {
        let run = |split: bool| -> String {
            let mut params = tiny_store();
            let mut state = AdamState::zeros_like(&params);
            let mut grads = GradStore::zeros_like(&params);
            for id in 0..params.len() {
                let shape = params.get(id).raw_dim();
                grads.accum(id, &ArrayD::from_elem(shape, 0.1));
            }
            adam_step(&mut params, &grads, &mut state, 1e-3, &AdamHyper::default(), 0).unwrap();
            if split {
                // simulate checkpoint: clone moments and continue on the clone
                let cloned_state = state.clone();
                let mut params2 = params.clone();
                let mut state2 = cloned_state;
                adam_step(&mut params2, &grads, &mut state2, 1e-3, &AdamHyper::default(), 1)
                    .unwrap();
                return params2.content_hash();
            }
            adam_step(&mut params, &grads, &mut state, 1e-3, &AdamHyper::default(), 1).unwrap();
            params.content_hash()
        };
        assert_eq!(run(false), run(true));
    }
}
