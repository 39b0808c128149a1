//! Dense-network numerics: matrices, affine layers with analytic gradients,
//! ReLU, inverted dropout, L2 penalty, Adam and finite-difference checks.

mod adam;
mod gradcheck;
mod layer;
mod matrix;
mod rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::grad_check;
pub use layer::{dropout, l2_penalty, relu_backward, relu_forward, DenseGrad, DenseLayer, DropoutMask};
pub use matrix::Matrix;
pub use rng::{mix_seed, Rng};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidRate(f64),
}
