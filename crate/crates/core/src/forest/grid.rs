//! Stratified k-fold grid search over forest hyperparameters.
//!
//! Configurations that differ only in `n_estimators`, `max_depth` or
//! `min_samples_split` share one set of grown trees per fold: tree seeds do not depend
//! on the forest size, and a depth or split-size limit only truncates the unlimited
//! tree (see [`super::tree::grow_tree`]). Scores equal independent fits bit for bit.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::{require_both_classes, tree_sample, RfConfig};
use super::tree::{check_xy, grow_tree, Columns, MaxFeatures, TreeParams};
use super::ForestError;
use crate::dataset::stratified_split;
use crate::eval::auc;
use crate::nn::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub max_features: Vec<MaxFeatures>,
    pub min_samples_split: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            n_estimators: vec![100, 300, 500],
            max_depth: vec![None, Some(10), Some(20)],
            max_features: vec![MaxFeatures::Sqrt, MaxFeatures::Log2, MaxFeatures::Fraction(0.5)],
            min_samples_split: vec![2, 5, 10],
            min_samples_leaf: vec![1, 2, 4],
        }
    }
}

impl HyperGrid {
    pub fn single(config: &RfConfig) -> Self {
        HyperGrid {
            n_estimators: vec![config.n_estimators],
            max_depth: vec![config.max_depth],
            max_features: vec![config.max_features],
            min_samples_split: vec![config.min_samples_split],
            min_samples_leaf: vec![config.min_samples_leaf],
        }
    }

    pub fn len(&self) -> usize {
        self.n_estimators.len()
            * self.max_depth.len()
            * self.max_features.len()
            * self.min_samples_split.len()
            * self.min_samples_leaf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cartesian product in declared axis order, `n_estimators` varying slowest.
    pub fn configs(&self, base: &RfConfig) -> Vec<RfConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &n_estimators in &self.n_estimators {
            for &max_depth in &self.max_depth {
                for &max_features in &self.max_features {
                    for &min_samples_split in &self.min_samples_split {
                        for &min_samples_leaf in &self.min_samples_leaf {
                            out.push(RfConfig {
                                n_estimators,
                                max_depth,
                                max_features,
                                min_samples_split,
                                min_samples_leaf,
                                ..base.clone()
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    pub config_id: usize,
    pub fold: usize,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub configs: Vec<RfConfig>,
    /// Per-configuration mean of fold AUCs, summed in fold order.
    pub mean_auc: Vec<f64>,
    /// One row per fit, ordered by configuration then fold.
    pub records: Vec<CvRecord>,
    pub folds: Vec<Vec<usize>>,
    pub best_index: usize,
}

impl GridSearchResult {
    pub fn best(&self) -> &RfConfig {
        &self.configs[self.best_index]
    }

    pub fn best_mean_auc(&self) -> f64 {
        self.mean_auc[self.best_index]
    }

    pub fn n_fits(&self) -> usize {
        self.records.len()
    }

    pub fn write_cv_table<W: Write>(&self, out: W) -> Result<(), ForestError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| ForestError::Io(e.to_string());
        w.write_record([
            "config_id",
            "n_estimators",
            "max_depth",
            "max_features",
            "min_samples_split",
            "min_samples_leaf",
            "fold",
            "auc",
        ])
        .map_err(io)?;
        for r in &self.records {
            let c = &self.configs[r.config_id];
            w.write_record([
                r.config_id.to_string(),
                c.n_estimators.to_string(),
                c.max_depth.map_or_else(|| "none".to_string(), |d| d.to_string()),
                c.max_features.to_string(),
                c.min_samples_split.to_string(),
                c.min_samples_leaf.to_string(),
                r.fold.to_string(),
                r.auc.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| ForestError::Io(e.to_string()))
    }

    pub fn save_cv_table(&self, path: &Path) -> Result<(), ForestError> {
        let f = std::fs::File::create(path).map_err(|e| ForestError::Io(format!("{}: {e}", path.display())))?;
        self.write_cv_table(std::io::BufWriter::new(f))
    }
}

fn validation_complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut held = vec![false; n];
    fold.iter().for_each(|&i| held[i] = true);
    (0..n).filter(|&i| !held[i]).collect()
}

struct Task {
    max_features: MaxFeatures,
    min_samples_leaf: usize,
    fold: usize,
}

/// Scores every configuration of `grid` (other fields from `base`) by mean validation
/// AUC over `k` stratified folds. Forests use `base.seed`; folds use `seed`.
pub fn grid_search_cv(
    x: &Matrix,
    y: &[u8],
    grid: &HyperGrid,
    base: &RfConfig,
    k: usize,
    seed: u64,
) -> Result<GridSearchResult, ForestError> {
    if grid.is_empty() {
        return Err(ForestError::InvalidConfig("empty hyperparameter grid".into()));
    }
    check_xy(x, y)?;
    require_both_classes(y)?;
    let configs = grid.configs(base);
    for c in &configs {
        c.validate()?;
    }
    let folds = stratified_split(y, k, seed)?;
    let max_trees = *grid.n_estimators.iter().max().expect("non-empty axis");

    let mut tasks = Vec::new();
    for &max_features in &grid.max_features {
        for &min_samples_leaf in &grid.min_samples_leaf {
            for fold in 0..k {
                tasks.push(Task {
                    max_features,
                    min_samples_leaf,
                    fold,
                });
            }
        }
    }
    let limits: Vec<(Option<usize>, usize)> = grid
        .max_depth
        .iter()
        .flat_map(|&d| grid.min_samples_split.iter().map(move |&s| (d, s)))
        .collect();

    let per_task: Vec<Vec<(usize, usize, f64)>> = tasks
        .par_iter()
        .map(|task| {
            let val = &folds[task.fold];
            let train = validation_complement(y.len(), val);
            let x_tr = x.select_rows(&train);
            let y_tr: Vec<u8> = train.iter().map(|&i| y[i]).collect();
            let y_val: Vec<u8> = val.iter().map(|&i| y[i]).collect();
            require_both_classes(&y_tr)?;
            let cols = Columns::new(&x_tr);
            let params = TreeParams {
                max_depth: None,
                max_features: task.max_features.resolve(x.cols()),
                min_samples_split: 2,
                min_samples_leaf: task.min_samples_leaf,
                criterion: base.criterion,
            };
            let mut sums = vec![vec![0.0; val.len()]; limits.len()];
            let mut out = Vec::new();
            for t in 0..max_trees {
                let (rows, tree_seed) = tree_sample(base.seed, t, train.len(), base.bootstrap);
                let tree = grow_tree(&cols, &y_tr, rows, params, tree_seed);
                for (li, &(depth, mss)) in limits.iter().enumerate() {
                    for (s, &r) in sums[li].iter_mut().zip(val) {
                        *s += tree.predict_row_truncated(x.row(r), depth, mss);
                    }
                }
                let n_trees = t + 1;
                if !grid.n_estimators.contains(&n_trees) {
                    continue;
                }
                for (li, &(depth, mss)) in limits.iter().enumerate() {
                    let probs: Vec<f64> = sums[li].iter().map(|s| s / n_trees as f64).collect();
                    let score = auc(&probs, &y_val)?;
                    for (id, c) in configs.iter().enumerate() {
                        if c.n_estimators == n_trees
                            && c.max_depth == depth
                            && c.min_samples_split == mss
                            && c.max_features == task.max_features
                            && c.min_samples_leaf == task.min_samples_leaf
                        {
                            out.push((id, task.fold, score));
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_, ForestError>>()?;

    let mut records: Vec<CvRecord> = per_task
        .into_iter()
        .flatten()
        .map(|(config_id, fold, auc)| CvRecord { config_id, fold, auc })
        .collect();
    records.sort_by_key(|r| (r.config_id, r.fold));

    let mut mean_auc = vec![0.0; configs.len()];
    for r in &records {
        mean_auc[r.config_id] += r.auc;
    }
    mean_auc.iter_mut().for_each(|m| *m /= k as f64);
    let mut best_index = 0;
    for (i, &m) in mean_auc.iter().enumerate() {
        if m > mean_auc[best_index] {
            best_index = i;
        }
    }
    Ok(GridSearchResult {
        configs,
        mean_auc,
        records,
        folds,
        best_index,
    })
}
