//! Minimal deterministic neural-network kernel: tensors, 1-D convolution,
//! batch normalization, ReLU, pooling, a dense layer, softmax/cross-entropy,
//! hand-derived backward passes, and SGD/Adam. Everything is f64 and every
//! backward pass is validated against central finite differences in the tests.

mod grad_check;
mod layers;
mod optim;
mod tensor;

pub use grad_check::{grad_check, GradCheck};
pub use layers::{
    cross_entropy, cross_entropy_logit_grad, global_avg_pool, global_avg_pool_backward, relu,
    relu_backward, softmax, BatchNorm1dLayer, BnCache, Conv1dLayer, DenseLayer,
};
pub use optim::{adam_step, sgd_step, AdamState};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("batch-norm train mode needs at least 2 values per channel")]
    DegenerateBatch,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}
