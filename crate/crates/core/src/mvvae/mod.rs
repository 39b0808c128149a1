//! Two-encoder / two-decoder variational autoencoder over paired radiomic views.
//!
//! Each view gets its own Gaussian encoder and decoder; the views meet only at
//! embedding time, where the posterior means are concatenated.

mod check;
mod checkpoint;
mod loss;
mod model;
mod train;

pub use check::{tiny_case, GradCheckCase};
pub use checkpoint::{Checkpoint, ParamArray, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use loss::{loss, loss_and_grad, sample_eps, LossComponents, ModelGrads, Noise};
pub use model::{
    kl_diag_gaussian, reparameterize, EncodeOutput, MvVaeModel, VaeConfig, ViewNet, LOGVAR_MAX,
    LOGVAR_MIN,
};
pub use train::{eval_loss, train, EpochRecord, TrainEvent, TrainHistory};

use crate::nn::NnError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VaeError {
    #[error(transparent)]
    Numeric(#[from] NnError),
    #[error("loss became non-finite")]
    NonFiniteLoss,
    #[error("empty batch")]
    EmptyBatch,
    #[error("no training rows")]
    EmptyTrainingSet,
    #[error("invalid VAE config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(String),
}
