//! Parameter update rules. Both operate in place on a flat list of parameter
//! tensors paired 1:1 with gradient tensors, so the training loop stays
//! layer-agnostic.

use super::Tensor;

/// Vanilla stochastic gradient descent: p -= lr * g.
pub fn sgd_step(params: &mut [Tensor], grads: &[Tensor], lr: f64) {
    assert_eq!(params.len(), grads.len());
    for (p, g) in params.iter_mut().zip(grads) {
        assert_eq!(p.shape(), g.shape());
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= lr * gv;
        }
    }
}

/// First/second-moment accumulators for Adam, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    /// Zero-initialized moments shaped like `params`; lr is the only knob,
    /// the betas and epsilon stay at 0.9 / 0.999 / 1e-8.
    pub fn new(params: &[Tensor], lr: f64) -> AdamState {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }
}

/// One bias-corrected Adam update:
///   m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2
///   p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
pub fn adam_step(state: &mut AdamState, params: &mut [Tensor], grads: &[Tensor]) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let c1 = 1.0 - state.beta1.powi(state.step as i32);
    let c2 = 1.0 - state.beta2.powi(state.step as i32);
    for i in 0..params.len() {
        assert_eq!(params[i].shape(), grads[i].shape());
        let (b1, b2) = (state.beta1, state.beta2);
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, (pv, &gv)) in params[i]
            .data_mut()
            .iter_mut()
            .zip(grads[i].data())
            .enumerate()
        {
            m[j] = b1 * m[j] + (1.0 - b1) * gv;
            v[j] = b2 * v[j] + (1.0 - b2) * gv * gv;
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            *pv -= state.lr * mhat / (vhat.sqrt() + state.epsilon);
        }
    }
}
