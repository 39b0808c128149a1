use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{check_xy, grow_tree, Columns, Criterion, MaxFeatures, Tree, TreeParams};
use super::ForestError;
use crate::nn::{mix_seed, Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfConfig {
    pub n_estimators: usize,
    /// `None` grows until the other stopping rules apply.
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub criterion: Criterion,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            n_estimators: 100,
            max_depth: None,
            max_features: MaxFeatures::Sqrt,
            min_samples_split: 2,
            min_samples_leaf: 1,
            criterion: Criterion::Gini,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl RfConfig {
    pub fn validate(&self) -> Result<(), ForestError> {
        let bad = |m: &str| Err(ForestError::InvalidConfig(m.to_string()));
        if self.n_estimators == 0 {
            return bad("n_estimators must be at least 1");
        }
        if self.min_samples_split < 2 {
            return bad("min_samples_split must be at least 2");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be at least 1");
        }
        if self.max_depth == Some(0) {
            return bad("max_depth must be positive");
        }
        self.max_features.validate()
    }

    pub fn tree_params(&self, d: usize) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            max_features: self.max_features.resolve(d),
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
            criterion: self.criterion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub config: RfConfig,
    pub n_features: usize,
}

/// Bootstrap rows and root seed for tree `t`; depends only on `(seed, t)`.
pub(crate) fn tree_sample(seed: u64, t: usize, n: usize, bootstrap: bool) -> (Vec<usize>, u64) {
    let mut rng = Rng::seed_from(mix_seed(seed, t as u64));
    let rows = if bootstrap {
        (0..n).map(|_| rng.below(n)).collect()
    } else {
        (0..n).collect()
    };
    (rows, rng.next_u64())
}

pub(crate) fn require_both_classes(y: &[u8]) -> Result<(), ForestError> {
    if y.contains(&0) && y.contains(&1) {
        Ok(())
    } else {
        Err(ForestError::SingleClassTraining)
    }
}

pub fn fit_forest(x: &Matrix, y: &[u8], config: &RfConfig) -> Result<ForestModel, ForestError> {
    config.validate()?;
    check_xy(x, y)?;
    require_both_classes(y)?;
    let cols = Columns::new(x);
    let params = config.tree_params(x.cols());
    let trees = (0..config.n_estimators)
        .into_par_iter()
        .map(|t| {
            let (rows, seed) = tree_sample(config.seed, t, x.rows(), config.bootstrap);
            grow_tree(&cols, y, rows, params, seed)
        })
        .collect();
    Ok(ForestModel {
        trees,
        config: config.clone(),
        n_features: x.cols(),
    })
}

impl ForestModel {
    /// Mean class-1 leaf frequency over trees, accumulated in tree order.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>, ForestError> {
        if x.cols() != self.n_features {
            return Err(ForestError::ShapeMismatch {
                expected: self.n_features,
                got: x.cols(),
            });
        }
        let n_trees = self.trees.len() as f64;
        Ok((0..x.rows())
            .into_par_iter()
            .map(|r| {
                let row = x.row(r);
                let mut sum = 0.0;
                for t in &self.trees {
                    sum += t.predict_row(row);
                }
                sum / n_trees
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::fit_tree;

    fn blobs(n: usize, seed: u64) -> (Matrix, Vec<u8>) {
        let mut rng = Rng::seed_from(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = (i % 2) as u8;
            let shift = if c == 1 { 3.0 } else { -3.0 };
            rows.push(vec![shift + 0.5 * rng.normal(), shift + 0.5 * rng.normal()]);
            y.push(c);
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn separable_blobs_are_fit_exactly() {
        let (x, y) = blobs(80, 1);
        let f = fit_forest(&x, &y, &RfConfig::default()).unwrap();
        assert_eq!(f.trees.len(), 100);
        let p = f.predict_proba(&x).unwrap();
        let acc = p.iter().zip(&y).filter(|(p, &l)| u8::from(**p > 0.5) == l).count();
        assert_eq!(acc, 80);
    }

    #[test]
    fn single_unbagged_tree_equals_cart() {
        let (x, y) = blobs(30, 2);
        let cfg = RfConfig {
            n_estimators: 1,
            bootstrap: false,
            max_features: MaxFeatures::Fraction(1.0),
            ..RfConfig::default()
        };
        let f = fit_forest(&x, &y, &cfg).unwrap();
        let t = fit_tree(&x, &y, cfg.tree_params(2), 0).unwrap();
        assert_eq!(f.trees[0].nodes, t.nodes);
        let p = f.predict_proba(&x).unwrap();
        for (r, q) in p.iter().enumerate() {
            assert_eq!(*q, t.predict_row(x.row(r)));
        }
    }

    #[test]
    fn same_seed_same_serialized_forest() {
        let (x, y) = blobs(40, 3);
        let cfg = RfConfig {
            n_estimators: 7,
            seed: 11,
            ..RfConfig::default()
        };
        let a = serde_json::to_string(&fit_forest(&x, &y, &cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&fit_forest(&x, &y, &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fewer_trees_are_a_prefix() {
        let (x, y) = blobs(40, 4);
        let big = fit_forest(&x, &y, &RfConfig { n_estimators: 9, ..RfConfig::default() }).unwrap();
        let small = fit_forest(&x, &y, &RfConfig { n_estimators: 4, ..RfConfig::default() }).unwrap();
        assert_eq!(&big.trees[..4], &small.trees[..]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (x, _) = blobs(6, 5);
        assert!(matches!(
            fit_forest(&x, &[1; 6], &RfConfig::default()),
            Err(ForestError::SingleClassTraining)
        ));
        let (x, y) = blobs(6, 5);
        let f = fit_forest(&x, &y, &RfConfig { n_estimators: 2, ..RfConfig::default() }).unwrap();
        assert!(matches!(
            f.predict_proba(&Matrix::zeros(2, 3)),
            Err(ForestError::ShapeMismatch { .. })
        ));
        assert!(RfConfig { min_samples_split: 1, ..RfConfig::default() }.validate().is_err());
    }
}
