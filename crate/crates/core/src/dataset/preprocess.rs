use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::types::{ClinicalTable, Cohort, FeatureTable, Modality, NormStats, ViewData, ViewStats};
use super::DatasetError;
use crate::nn::Matrix;

/// Standard deviations below this map every value of the column to 0.
pub const CONSTANT_STD: f64 = 1e-12;

/// Keeps subjects present in both feature tables with a known label, sorted by id.
pub fn align_cohort(
    t1gd: &FeatureTable,
    flair: &FeatureTable,
    clinical: &ClinicalTable,
) -> Result<Cohort, DatasetError> {
    let flair_rows: HashMap<&str, usize> = flair
        .subject_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let labels: HashMap<&str, u8> = clinical
        .subject_ids
        .iter()
        .zip(&clinical.mgmt)
        .filter_map(|(id, s)| s.label().map(|l| (id.as_str(), l)))
        .collect();

    let mut keep: Vec<(&str, usize, usize, u8)> = t1gd
        .subject_ids
        .iter()
        .enumerate()
        .filter_map(|(i, id)| {
            let j = *flair_rows.get(id.as_str())?;
            let y = *labels.get(id.as_str())?;
            Some((id.as_str(), i, j, y))
        })
        .collect();
    if keep.is_empty() {
        return Err(DatasetError::EmptyCohort);
    }
    keep.sort_unstable_by(|a, b| a.0.cmp(b.0));

    let rows_t1: Vec<usize> = keep.iter().map(|k| k.1).collect();
    let rows_fl: Vec<usize> = keep.iter().map(|k| k.2).collect();
    Ok(Cohort {
        subject_ids: keep.iter().map(|k| k.0.to_string()).collect(),
        t1gd: table_rows(t1gd, &rows_t1),
        flair: table_rows(flair, &rows_fl),
        y: keep.iter().map(|k| k.3).collect(),
    })
}

fn table_rows(t: &FeatureTable, rows: &[usize]) -> ViewData {
    ViewData {
        feature_names: t.feature_names.clone(),
        values: t.values.clone(),
        missing: t.missing.clone(),
    }
    .select_rows(rows)
}

/// Median with the even-count convention of averaging the central pair. Sorts in place.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Column medians of observed entries among `train_rows`.
pub fn fit_medians(view: &ViewData, train_rows: &[usize]) -> Result<Vec<f64>, DatasetError> {
    let d = view.n_features();
    (0..d)
        .map(|j| {
            let mut obs: Vec<f64> = train_rows
                .iter()
                .filter(|&&i| !view.missing[i * d + j])
                .map(|&i| view.values.get(i, j))
                .collect();
            median(&mut obs).ok_or_else(|| DatasetError::AllMissingInTrain(view.feature_names[j].clone()))
        })
        .collect()
}

pub fn fill_missing(view: &ViewData, fill: &[f64]) -> ViewData {
    let d = view.n_features();
    let mut values = view.values.clone();
    for (k, &miss) in view.missing.iter().enumerate() {
        if miss {
            values.data_mut()[k] = fill[k % d];
        }
    }
    ViewData::complete(view.feature_names.clone(), values)
}

/// Replaces every missing cell by its column's median over the training rows.
pub fn impute_median(cohort: &Cohort, train_rows: &[usize]) -> Result<Cohort, DatasetError> {
    let mut out = cohort.clone();
    for m in Modality::ALL {
        let view = cohort.view(m);
        if !view.has_missing() {
            continue;
        }
        let medians = fit_medians(view, train_rows)?;
        *out.view_mut(m) = fill_missing(view, &medians);
    }
    Ok(out)
}

fn fit_view(values: &Matrix, rows: &[usize]) -> ViewStats {
    let d = values.cols();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in rows {
        for (m, v) in mean.iter_mut().zip(values.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for &i in rows {
        for ((s, v), m) in var.iter_mut().zip(values.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    ViewStats {
        mean,
        std: var.into_iter().map(|s| (s / n).sqrt()).collect(),
    }
}

/// Per-view column means and population standard deviations over `train_rows`.
pub fn zscore_fit(cohort: &Cohort, train_rows: &[usize]) -> Result<NormStats, DatasetError> {
    if train_rows.is_empty() {
        return Err(DatasetError::EmptyTrainRows);
    }
    if cohort.has_missing() {
        return Err(DatasetError::MissingValues);
    }
    Ok(NormStats {
        t1gd: fit_view(&cohort.t1gd.values, train_rows),
        flair: fit_view(&cohort.flair.values, train_rows),
        train_rows: train_rows.to_vec(),
    })
}

pub fn apply_view_stats(values: &Matrix, stats: &ViewStats) -> Result<Matrix, DatasetError> {
    if values.cols() != stats.mean.len() {
        return Err(DatasetError::ShapeMismatch {
            expected: stats.mean.len(),
            got: values.cols(),
        });
    }
    let mut out = values.clone();
    for r in 0..out.rows() {
        for ((v, m), s) in out.row_mut(r).iter_mut().zip(&stats.mean).zip(&stats.std) {
            *v = if *s < CONSTANT_STD { 0.0 } else { (*v - m) / s };
        }
    }
    Ok(out)
}

pub fn zscore_apply(cohort: &Cohort, stats: &NormStats) -> Result<Cohort, DatasetError> {
    let mut out = cohort.clone();
    for m in Modality::ALL {
        out.view_mut(m).values = apply_view_stats(&cohort.view(m).values, stats.view(m))?;
    }
    Ok(out)
}

/// Train-only imputation medians and z-score statistics, reusable on new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub t1gd_medians: Vec<f64>,
    pub flair_medians: Vec<f64>,
    pub stats: NormStats,
}

impl Preprocessor {
    /// Fits medians on `train_rows`, imputes, then fits z-score stats on the same rows.
    pub fn fit(cohort: &Cohort, train_rows: &[usize]) -> Result<Self, DatasetError> {
        if train_rows.is_empty() {
            return Err(DatasetError::EmptyTrainRows);
        }
        let t1gd_medians = fit_medians(&cohort.t1gd, train_rows)?;
        let flair_medians = fit_medians(&cohort.flair, train_rows)?;
        let mut imputed = cohort.clone();
        imputed.t1gd = fill_missing(&cohort.t1gd, &t1gd_medians);
        imputed.flair = fill_missing(&cohort.flair, &flair_medians);
        let stats = zscore_fit(&imputed, train_rows)?;
        Ok(Preprocessor {
            t1gd_medians,
            flair_medians,
            stats,
        })
    }

    pub fn apply(&self, cohort: &Cohort) -> Result<Cohort, DatasetError> {
        for (m, med) in [(Modality::T1Gd, &self.t1gd_medians), (Modality::Flair, &self.flair_medians)] {
            if cohort.view(m).n_features() != med.len() {
                return Err(DatasetError::ShapeMismatch {
                    expected: med.len(),
                    got: cohort.view(m).n_features(),
                });
            }
        }
        let mut out = cohort.clone();
        out.t1gd = fill_missing(&cohort.t1gd, &self.t1gd_medians);
        out.flair = fill_missing(&cohort.flair, &self.flair_medians);
        zscore_apply(&out, &self.stats)
    }
}
