//! Ranking metrics for binary scores.

use serde::{Deserialize, Serialize};

use super::EvalError;

fn check(scores: &[f64], labels: &[u8]) -> Result<(usize, usize), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::ShapeMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore);
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.iter().filter(|&&l| l == 0).count();
    if pos + neg != labels.len() {
        return Err(EvalError::InvalidLabel);
    }
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClassLabels);
    }
    Ok((pos, neg))
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    let (pos, neg) = check(scores, labels)?;
    let positives: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(s, _)| *s).collect();
    let negatives: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 0).map(|(s, _)| *s).collect();
    // Doubled so ties stay integral.
    let mut twice_wins: u64 = 0;
    for &p in &positives {
        for &q in &negatives {
            twice_wins += if p > q {
                2
            } else if p == q {
                1
            } else {
                0
            };
        }
    }
    Ok(twice_wins as f64 / (2 * pos * neg) as f64)
}

/// Mann–Whitney U from mid-ranks, normalized.
pub fn auc_rank_sum(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    let (pos, neg) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                rank_sum_pos += mid;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Score cut: rows scoring `>= threshold` are called positive. `None` is the
    /// (0, 0) corner above every score.
    pub threshold: Option<f64>,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocResult, EvalError> {
    let (pos, neg) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: None,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: Some(s),
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(RocResult {
        points,
        auc: auc(scores, labels)?,
    })
}

/// Area under a piecewise-linear curve through the points.
pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let s = [0.1, 0.4, 0.35, 0.8];
        let y = [0, 0, 1, 1];
        assert_eq!(auc(&s, &y).unwrap(), 0.75);
        assert_eq!(auc_rank_sum(&s, &y).unwrap(), 0.75);
    }

    #[test]
    fn extremes() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 5], &[0, 1, 0, 1, 1]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(EvalError::SingleClassLabels)));
        assert!(matches!(auc(&[0.1, f64::NAN], &[0, 1]), Err(EvalError::NonFiniteScore)));
    }

    #[test]
    fn perfect_curve_passes_through_corner() {
        let r = roc_curve(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap();
        assert!(r.points.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(r.points.first().map(|p| (p.fpr, p.tpr)), Some((0.0, 0.0)));
        assert_eq!(r.points.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
    }

    #[test]
    fn tied_scores_form_one_point() {
        let r = roc_curve(&[0.5, 0.5, 0.5, 0.1], &[1, 0, 1, 0]).unwrap();
        assert_eq!(r.points.len(), 3);
        assert_eq!(r.points[1].threshold, Some(0.5));
        assert_eq!((r.points[1].fpr, r.points[1].tpr), (0.5, 1.0));
        assert_eq!(trapezoid_area(&r.points), r.auc);
    }
}
