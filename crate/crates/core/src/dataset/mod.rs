//! Radiomic feature tables: loading, subject alignment, median imputation,
//! per-view z-scoring, stratified splits and a synthetic cohort generator.

mod io;
mod preprocess;
mod split;
mod synth;
mod types;

pub use io::{load_clinical_table, load_feature_table, write_clinical_csv, write_feature_csv};
pub use preprocess::{
    align_cohort, apply_view_stats, fill_missing, fit_medians, impute_median, median, zscore_apply, Preprocessor,
    zscore_fit, CONSTANT_STD,
};
pub use split::{holdout_split, stratified_split, Holdout};
pub use synth::{synth_cohort, SynthCohort, SynthParams};
pub use types::{
    class_counts, ClinicalTable, Cohort, FeatureTable, MgmtStatus, Modality, NormStats, ViewData,
    ViewStats,
};

use crate::nn::NnError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {reason}")]
    FileUnreadable { path: String, reason: String },
    #[error("cannot write {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{path}: header must start with `{expected}`")]
    BadHeader { path: String, expected: &'static str },
    #[error("duplicate subject id `{0}`")]
    DuplicateSubjectId(String),
    #[error("{0}: no feature columns")]
    NoFeatureColumns(String),
    #[error("unrecognised MGMT label `{0}`")]
    InvalidLabel(String),
    #[error("no subject has both modalities and a known label")]
    EmptyCohort,
    #[error("feature `{0}` has no observed value among training rows")]
    AllMissingInTrain(String),
    #[error("training row set is empty")]
    EmptyTrainRows,
    #[error("cohort still contains missing values")]
    MissingValues,
    #[error("class {class} has {count} member(s), need at least {required}")]
    InsufficientClass { class: u8, count: usize, required: usize },
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("test fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("labels stayed single-class after {0} draws")]
    DegenerateLabels(usize),
    #[error("invalid synthetic parameters: {0}")]
    InvalidSynthParams(&'static str),
    #[error("feature count mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Numeric(#[from] NnError),
}
