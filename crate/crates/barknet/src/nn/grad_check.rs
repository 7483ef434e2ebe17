//! Finite-difference verification of analytic gradients.
//!
//! Central differences give an independent estimate of d(loss)/d(param) that
//! shares no code with the backward passes, so agreement between the two is
//! strong evidence both are right. The relative error uses
//! |a - n| / max(1e-12, |a| + |n|), which stays meaningful when one side is
//! near zero.

use super::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Central-difference gradient estimate per parameter tensor.
    pub numeric: Vec<Tensor>,
    /// Elementwise relative error between analytic and numeric.
    pub rel_err: Vec<Tensor>,
    /// Largest relative error over every element of every tensor.
    pub max_rel_err: f64,
}

/// Compare `analytic` against (loss(p+h) - loss(p-h)) / 2h elementwise.
///
/// `loss` must be a pure function of the parameter values it is handed; it is
/// called 2 x numel times, so keep the model small when using this.
pub fn grad_check<F>(params: &[Tensor], analytic: &[Tensor], mut loss: F, h: f64) -> GradCheck
where
    F: FnMut(&[Tensor]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let mut work: Vec<Tensor> = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let mut rel_err = Vec::with_capacity(params.len());
    let mut max_rel = 0.0f64;
    for ti in 0..params.len() {
        assert_eq!(params[ti].shape(), analytic[ti].shape());
        let mut num = Tensor::zeros(params[ti].shape());
        let mut rel = Tensor::zeros(params[ti].shape());
        for j in 0..params[ti].numel() {
            let orig = params[ti].data()[j];
            work[ti].data_mut()[j] = orig + h;
            let up = loss(&work);
            work[ti].data_mut()[j] = orig - h;
            let down = loss(&work);
            work[ti].data_mut()[j] = orig;
            let n = (up - down) / (2.0 * h);
            let a = analytic[ti].data()[j];
            let r = (a - n).abs() / (a.abs() + n.abs()).max(1e-12);
            num.data_mut()[j] = n;
            rel.data_mut()[j] = r;
            max_rel = max_rel.max(r);
        }
        numeric.push(num);
        rel_err.push(rel);
    }
    GradCheck {
        numeric,
        rel_err,
        max_rel_err: max_rel,
    }
}
