//! Ranking metrics, the five-model comparison, 2-D projection and artifact output.

mod artifacts;
mod experiment;
mod metrics;
mod project;

pub use artifacts::{
    auc_bar_svg, contour_segments, emit_artifacts, load_report, ramp, roc_csv, scatter_svg, smooth_grid, to_json_17,
};
pub use experiment::{
    fit_models, run_experiment, score_models, CvSummary, ExperimentConfig, ExperimentOutput, FittedModels,
    ModelResult, ProjectionData, Report, Seeds, SplitInfo, VaeSummary, Versions, vae_validation_split,
    METRICS_FORMAT_VERSION,
    MODEL_NAMES,
};
pub use metrics::{auc, auc_rank_sum, roc_curve, trapezoid_area, RocPoint, RocResult};
pub use project::{project_2d, Projection2d};

use crate::dataset::DatasetError;
use crate::forest::ForestError;
use crate::mvvae::VaeError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("labels contain a single class")]
    SingleClassLabels,
    #[error("scores must be finite")]
    NonFiniteScore,
    #[error("labels must be 0 or 1")]
    InvalidLabel,
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Data(#[from] DatasetError),
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Metric(#[from] EvalError),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("io: {0}")]
    Io(String),
}
