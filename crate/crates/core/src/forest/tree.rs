//! CART classification trees on binary labels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ForestError;
use crate::nn::{mix_seed, Matrix, Rng};

/// Gains at or below this are treated as no improvement.
pub const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Gini,
    Entropy,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Gini => "gini",
            Criterion::Entropy => "entropy",
        })
    }
}

impl FromStr for Criterion {
    type Err = ForestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gini" => Ok(Criterion::Gini),
            "entropy" => Ok(Criterion::Entropy),
            other => Err(ForestError::InvalidConfig(format!("unknown criterion `{other}`"))),
        }
    }
}

/// Number of candidate features drawn at each node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    #[default]
    Sqrt,
    Log2,
    Fraction(f64),
}

impl MaxFeatures {
    pub fn resolve(&self, d: usize) -> usize {
        let k = match *self {
            MaxFeatures::Sqrt => (d as f64).sqrt().ceil() as usize,
            MaxFeatures::Log2 => ((d as f64).log2().floor() as usize).max(1),
            MaxFeatures::Fraction(f) => ((f * d as f64).floor() as usize).max(1),
        };
        k.clamp(1, d.max(1))
    }

    pub fn validate(&self) -> Result<(), ForestError> {
        match *self {
            MaxFeatures::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                Err(ForestError::InvalidConfig(format!("max_features fraction {f} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MaxFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaxFeatures::Sqrt => f.write_str("sqrt"),
            MaxFeatures::Log2 => f.write_str("log2"),
            MaxFeatures::Fraction(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for MaxFeatures {
    type Err = ForestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let mf = match t.as_str() {
            "sqrt" => MaxFeatures::Sqrt,
            "log2" => MaxFeatures::Log2,
            "all" => MaxFeatures::Fraction(1.0),
            _ => MaxFeatures::Fraction(
                t.parse()
                    .map_err(|_| ForestError::InvalidConfig(format!("bad max_features `{s}`")))?,
            ),
        };
        mf.validate()?;
        Ok(mf)
    }
}

/// Growth limits for a single tree. `max_features` is already resolved to a count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub max_features: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub criterion: Criterion,
}

impl TreeParams {
    /// No depth or split-size limit, every feature considered.
    pub fn exhaustive(d: usize) -> Self {
        TreeParams {
            max_depth: None,
            max_features: d,
            min_samples_split: 2,
            min_samples_leaf: 1,
            criterion: Criterion::Gini,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    pub gain: f64,
}

/// Every node keeps its class counts so a tree can be read at any truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub counts: [usize; 2],
    pub depth: usize,
    pub split: Option<Split>,
}

impl Node {
    pub fn n(&self) -> usize {
        self.counts[0] + self.counts[1]
    }

    pub fn p1(&self) -> f64 {
        self.counts[1] as f64 / self.n() as f64
    }

    pub fn frequencies(&self) -> (f64, f64) {
        (self.counts[0] as f64 / self.n() as f64, self.p1())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
}

impl Tree {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_none()).count()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    fn leaf_index(&self, x: &[f64], max_depth: Option<usize>, min_samples_split: usize) -> usize {
        let mut i = 0;
        loop {
            let node = &self.nodes[i];
            let Some(s) = node.split else { return i };
            if max_depth.is_some_and(|d| node.depth >= d) || node.n() < min_samples_split {
                return i;
            }
            i = if x[s.feature] <= s.threshold { s.left } else { s.right };
        }
    }

    /// Class-1 frequency of the leaf reached by `x`.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_index(x, None, 0)].p1()
    }

    /// Prediction of the tree that growth with the given limits would have produced.
    pub fn predict_row_truncated(&self, x: &[f64], max_depth: Option<usize>, min_samples_split: usize) -> f64 {
        self.nodes[self.leaf_index(x, max_depth, min_samples_split)].p1()
    }
}

pub(crate) fn impurity_of_counts(c0: usize, c1: usize, criterion: Criterion) -> f64 {
    let n = (c0 + c1) as f64;
    let p0 = c0 as f64 / n;
    let p1 = c1 as f64 / n;
    match criterion {
        Criterion::Gini => 1.0 - p0 * p0 - p1 * p1,
        Criterion::Entropy => [p0, p1]
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.log2())
            .sum(),
    }
}

pub fn impurity(labels: &[u8], criterion: Criterion) -> Result<f64, ForestError> {
    if labels.is_empty() {
        return Err(ForestError::EmptyNode);
    }
    let c1 = labels.iter().filter(|&&l| l == 1).count();
    Ok(impurity_of_counts(labels.len() - c1, c1, criterion))
}

/// Column-major view of the training matrix shared by every tree.
pub(crate) struct Columns(pub Vec<Vec<f64>>);

impl Columns {
    pub fn new(x: &Matrix) -> Self {
        Columns((0..x.cols()).map(|j| x.column(j)).collect())
    }
}

struct Grower<'a> {
    cols: &'a Columns,
    y: &'a [u8],
    params: TreeParams,
    nodes: Vec<Node>,
    pairs: Vec<(f64, u8)>,
}

impl Grower<'_> {
    fn counts(&self, rows: &[usize]) -> [usize; 2] {
        let c1 = rows.iter().filter(|&&r| self.y[r] == 1).count();
        [rows.len() - c1, c1]
    }

    fn best_split(&mut self, rows: &[usize], counts: [usize; 2], seed: u64) -> Option<(usize, f64, f64)> {
        let d = self.cols.0.len();
        let p = &self.params;
        let n = rows.len();
        let parent = impurity_of_counts(counts[0], counts[1], p.criterion);
        let features: Vec<usize> = if p.max_features >= d {
            (0..d).collect()
        } else {
            let mut rng = Rng::seed_from(seed);
            let mut pool: Vec<usize> = (0..d).collect();
            for i in 0..p.max_features {
                let j = i + rng.below(d - i);
                pool.swap(i, j);
            }
            pool.truncate(p.max_features);
            pool.sort_unstable();
            pool
        };

        let mut best: Option<(usize, f64, f64)> = None;
        let mut best_gain = 0.0;
        for f in features {
            let col = &self.cols.0[f];
            self.pairs.clear();
            self.pairs.extend(rows.iter().map(|&r| (col[r], self.y[r])));
            self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = [0usize; 2];
            for i in 0..n - 1 {
                left[self.pairs[i].1 as usize] += 1;
                let (a, b) = (self.pairs[i].0, self.pairs[i + 1].0);
                if a == b {
                    continue;
                }
                let nl = i + 1;
                let nr = n - nl;
                if nl < p.min_samples_leaf || nr < p.min_samples_leaf {
                    continue;
                }
                let right = [counts[0] - left[0], counts[1] - left[1]];
                let child = (nl as f64 * impurity_of_counts(left[0], left[1], p.criterion)
                    + nr as f64 * impurity_of_counts(right[0], right[1], p.criterion))
                    / n as f64;
                let gain = parent - child;
                if gain > best_gain + MIN_GAIN {
                    let mut t = a + (b - a) / 2.0;
                    if t >= b {
                        t = a;
                    }
                    best_gain = gain;
                    best = Some((f, t, gain));
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize, seed: u64) -> usize {
        let counts = self.counts(&rows);
        let id = self.nodes.len();
        self.nodes.push(Node {
            counts,
            depth,
            split: None,
        });
        let p = self.params;
        let pure = counts[0] == 0 || counts[1] == 0;
        let stop = pure
            || p.max_depth.is_some_and(|d| depth >= d)
            || rows.len() < p.min_samples_split
            || rows.len() < 2 * p.min_samples_leaf;
        if stop {
            return id;
        }
        let Some((feature, threshold, gain)) = self.best_split(&rows, counts, seed) else {
            return id;
        };
        let col = &self.cols.0[feature];
        let (lrows, rrows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| col[r] <= threshold);
        drop(rows);
        let left = self.grow(lrows, depth + 1, mix_seed(seed, 1));
        let right = self.grow(rrows, depth + 1, mix_seed(seed, 2));
        self.nodes[id].split = Some(Split {
            feature,
            threshold,
            left,
            right,
            gain,
        });
        id
    }
}

/// Grows a tree on `rows` (duplicates allowed, as from a bootstrap draw).
///
/// Candidate features at a node are drawn from a seed that depends only on the
/// node's path from the root, so limiting depth or split size yields exactly the
/// corresponding truncation of the unlimited tree.
pub(crate) fn grow_tree(cols: &Columns, y: &[u8], rows: Vec<usize>, params: TreeParams, seed: u64) -> Tree {
    let mut g = Grower {
        cols,
        y,
        params,
        nodes: Vec::new(),
        pairs: Vec::with_capacity(rows.len()),
    };
    g.grow(rows, 0, seed);
    Tree {
        nodes: g.nodes,
        n_features: cols.0.len(),
    }
}

pub(crate) fn check_xy(x: &Matrix, y: &[u8]) -> Result<(), ForestError> {
    if x.rows() != y.len() {
        return Err(ForestError::ShapeMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    if x.rows() == 0 {
        return Err(ForestError::EmptyNode);
    }
    if y.iter().any(|&l| l > 1) {
        return Err(ForestError::InvalidLabel);
    }
    Ok(())
}

/// Deterministic CART fit on every row of `x`.
pub fn fit_tree(x: &Matrix, y: &[u8], params: TreeParams, seed: u64) -> Result<Tree, ForestError> {
    check_xy(x, y)?;
    if params.min_samples_split < 2 || params.min_samples_leaf < 1 || params.max_features == 0 {
        return Err(ForestError::InvalidConfig("tree limits out of range".into()));
    }
    let cols = Columns::new(x);
    Ok(grow_tree(&cols, y, (0..x.rows()).collect(), params, seed))
}
