//! Decision trees, random forests and cross-validated grid search.

mod ensemble;
mod grid;
mod tree;

pub use ensemble::{fit_forest, ForestModel, RfConfig};
pub use grid::{grid_search_cv, CvRecord, GridSearchResult, HyperGrid};
pub use tree::{fit_tree, impurity, Criterion, MaxFeatures, Node, Split, Tree, TreeParams, MIN_GAIN};

use crate::dataset::DatasetError;
use crate::eval::EvalError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForestError {
    #[error("training labels contain a single class")]
    SingleClassTraining,
    #[error("empty node")]
    EmptyNode,
    #[error("labels must be 0 or 1")]
    InvalidLabel,
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid forest config: {0}")]
    InvalidConfig(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Split(#[from] DatasetError),
    #[error(transparent)]
    Metric(#[from] EvalError),
}
