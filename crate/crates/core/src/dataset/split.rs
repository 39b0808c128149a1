use serde::{Deserialize, Serialize};

use super::types::class_counts;
use super::DatasetError;
use crate::nn::Rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Holdout {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn class_indices(y: &[u8]) -> [Vec<usize>; 2] {
    let mut by_class = [Vec::new(), Vec::new()];
    for (i, &label) in y.iter().enumerate() {
        by_class[usize::from(label != 0)].push(i);
    }
    by_class
}

/// `k` disjoint folds covering every index, with per-class counts differing by at most one.
///
/// Each class is shuffled and dealt round-robin; the deal continues across classes so
/// fold sizes also stay balanced. Indices within a fold are sorted.
pub fn stratified_split(y: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, DatasetError> {
    if k < 2 {
        return Err(DatasetError::InvalidFoldCount(k));
    }
    let counts = class_counts(y);
    for (class, &count) in counts.iter().enumerate() {
        if count < k {
            return Err(DatasetError::InsufficientClass {
                class: class as u8,
                count,
                required: k,
            });
        }
    }
    let mut rng = Rng::seed_from(seed);
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0;
    for mut idx in class_indices(y) {
        rng.shuffle(&mut idx);
        for i in idx {
            folds[slot % k].push(i);
            slot += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Single stratified train/test split.
///
/// The test size is `round(n * test_fraction)` clamped to `[1, n - 1]`, apportioned to
/// the classes by largest remainder (ties go to class 0).
pub fn holdout_split(y: &[u8], test_fraction: f64, seed: u64) -> Result<Holdout, DatasetError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(test_fraction));
    }
    let counts = class_counts(y);
    for (class, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(DatasetError::InsufficientClass {
                class: class as u8,
                count,
                required: 1,
            });
        }
    }
    let n = y.len();
    let total = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let quotas: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 * total as f64 / n as f64)
        .collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = total - alloc.iter().sum::<usize>();
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(4) {
        if left == 0 {
            break;
        }
        if alloc[c] < counts[c] {
            alloc[c] += 1;
            left -= 1;
        }
    }

    let mut rng = Rng::seed_from(seed);
    let mut split = Holdout {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (class, mut idx) in class_indices(y).into_iter().enumerate() {
        rng.shuffle(&mut idx);
        let (test, train) = idx.split_at(alloc[class]);
        split.test.extend_from_slice(test);
        split.train.extend_from_slice(train);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_fold_example() {
        let y = [1, 1, 0, 0];
        let folds = stratified_split(&y, 2, 5).unwrap();
        for f in &folds {
            let c = class_counts(&f.iter().map(|&i| y[i]).collect::<Vec<_>>());
            assert_eq!(c, [1, 1]);
        }
    }

    #[test]
    fn insufficient_class() {
        assert_eq!(
            stratified_split(&[1, 1, 1, 0, 0], 5, 0),
            Err(DatasetError::InsufficientClass {
                class: 0,
                count: 2,
                required: 5
            })
        );
    }

    #[test]
    fn deterministic() {
        let y: Vec<u8> = (0..40).map(|i| (i % 3 == 0) as u8).collect();
        assert_eq!(stratified_split(&y, 5, 11), stratified_split(&y, 5, 11));
        assert_eq!(holdout_split(&y, 0.25, 11), holdout_split(&y, 0.25, 11));
    }

    #[test]
    fn holdout_examples() {
        let y: Vec<u8> = [vec![0; 8], vec![1; 8]].concat();
        let s = holdout_split(&y, 0.25, 1).unwrap();
        let c = class_counts(&s.test.iter().map(|&i| y[i]).collect::<Vec<_>>());
        assert_eq!(c, [2, 2]);
        assert_eq!(s.train.len(), 12);

        let s = holdout_split(&[0, 1], 0.5, 1).unwrap();
        assert_eq!(s.train.len(), 1);
        assert_eq!(s.test.len(), 1);
    }

    #[test]
    fn holdout_errors() {
        assert!(matches!(
            holdout_split(&[1, 1], 0.5, 0),
            Err(DatasetError::InsufficientClass { class: 0, .. })
        ));
        assert!(matches!(
            holdout_split(&[0, 1], 1.0, 0),
            Err(DatasetError::InvalidFraction(_))
        ));
    }
}
