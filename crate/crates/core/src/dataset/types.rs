use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    T1Gd,
    Flair,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::T1Gd, Modality::Flair];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::T1Gd => "t1gd",
            Modality::Flair => "flair",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "t1gd" => Ok(Modality::T1Gd),
            "flair" => Ok(Modality::Flair),
            other => Err(format!("unknown modality `{other}`")),
        }
    }
}

/// One modality's subjects × features table. Missing cells hold `0.0` and are never read.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub modality: Modality,
    pub subject_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub values: Matrix,
    pub missing: Vec<bool>,
}

impl FeatureTable {
    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing[row * self.n_features() + col]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MgmtStatus {
    Unmethylated,
    Methylated,
    Unknown,
}

impl MgmtStatus {
    pub fn label(self) -> Option<u8> {
        match self {
            MgmtStatus::Unmethylated => Some(0),
            MgmtStatus::Methylated => Some(1),
            MgmtStatus::Unknown => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MgmtStatus::Unmethylated => "unmethylated",
            MgmtStatus::Methylated => "methylated",
            MgmtStatus::Unknown => "unknown",
        }
    }
}

impl FromStr for MgmtStatus {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "methylated" => Ok(MgmtStatus::Methylated),
            "unmethylated" => Ok(MgmtStatus::Unmethylated),
            "unknown" | "" => Ok(MgmtStatus::Unknown),
            other => Err(DatasetError::InvalidLabel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClinicalTable {
    pub subject_ids: Vec<String>,
    pub mgmt: Vec<MgmtStatus>,
}

/// Feature matrix of one view plus its missing mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewData {
    pub feature_names: Vec<String>,
    pub values: Matrix,
    pub missing: Vec<bool>,
}

impl ViewData {
    pub fn complete(feature_names: Vec<String>, values: Matrix) -> Self {
        let missing = vec![false; values.data().len()];
        ViewData {
            feature_names,
            values,
            missing,
        }
    }

    pub fn n_features(&self) -> usize {
        self.values.cols()
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    pub fn select_rows(&self, idx: &[usize]) -> ViewData {
        let cols = self.values.cols();
        let mut missing = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            missing.extend_from_slice(&self.missing[i * cols..(i + 1) * cols]);
        }
        ViewData {
            feature_names: self.feature_names.clone(),
            values: self.values.select_rows(idx),
            missing,
        }
    }
}

/// Paired per-view matrices and binary labels, row-aligned to `subject_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub subject_ids: Vec<String>,
    pub t1gd: ViewData,
    pub flair: ViewData,
    pub y: Vec<u8>,
}

impl Cohort {
    pub fn n(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn view(&self, m: Modality) -> &ViewData {
        match m {
            Modality::T1Gd => &self.t1gd,
            Modality::Flair => &self.flair,
        }
    }

    pub fn view_mut(&mut self, m: Modality) -> &mut ViewData {
        match m {
            Modality::T1Gd => &mut self.t1gd,
            Modality::Flair => &mut self.flair,
        }
    }

    pub fn has_missing(&self) -> bool {
        self.t1gd.has_missing() || self.flair.has_missing()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Cohort {
        Cohort {
            subject_ids: idx.iter().map(|&i| self.subject_ids[i].clone()).collect(),
            t1gd: self.t1gd.select_rows(idx),
            flair: self.flair.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Early-fusion design matrix `[T1Gd | FLAIR]`.
    pub fn concatenated(&self) -> Matrix {
        Matrix::hconcat(&self.t1gd.values, &self.flair.values)
            .expect("cohort views are row-aligned")
    }

    pub fn class_counts(&self) -> [usize; 2] {
        class_counts(&self.y)
    }
}

pub fn class_counts(y: &[u8]) -> [usize; 2] {
    let ones = y.iter().filter(|&&v| v == 1).count();
    [y.len() - ones, ones]
}

/// Per-view z-score statistics fitted on a designated set of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub t1gd: ViewStats,
    pub flair: ViewStats,
    pub train_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn view(&self, m: Modality) -> &ViewStats {
        match m {
            Modality::T1Gd => &self.t1gd,
            Modality::Flair => &self.flair,
        }
    }
}
