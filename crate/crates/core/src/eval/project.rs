//! Two-component PCA by power iteration with deflation.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::nn::{Matrix, Rng};

const TOL: f64 = 1e-10;
const MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2d {
    /// `[n × 2]`, columns centered.
    pub coords: Matrix,
    /// Sample variances of the two components, descending.
    pub variances: [f64; 2],
    pub components: [Vec<f64>; 2],
    pub mean: Vec<f64>,
}

fn mat_vec(c: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    c.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn orthogonalize(v: &mut [f64], against: &[f64]) {
    let p: f64 = v.iter().zip(against).map(|(a, b)| a * b).sum();
    v.iter_mut().zip(against).for_each(|(a, b)| *a -= p * b);
}

/// Largest-magnitude entry positive; earliest index on ties.
fn fix_sign(v: &mut [f64]) {
    let mut k = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[k].abs() {
            k = i;
        }
    }
    if v[k] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn leading_eigvec(c: &[Vec<f64>], rng: &mut Rng, against: Option<&[f64]>) -> Vec<f64> {
    let d = c.len();
    let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    if let Some(a) = against {
        orthogonalize(&mut v, a);
    }
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    for _ in 0..MAX_ITER {
        let mut w = mat_vec(c, &v);
        if let Some(a) = against {
            orthogonalize(&mut w, a);
        }
        let nw = norm(&w);
        if nw < 1e-300 {
            // Null direction: any unit vector in the remaining subspace will do.
            break;
        }
        w.iter_mut().for_each(|x| *x /= nw);
        let dot: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        v = w;
        if 1.0 - dot.abs() < TOL {
            break;
        }
    }
    fix_sign(&mut v);
    v
}

/// Centers columns and projects onto the top two principal directions.
pub fn project_2d(x: &Matrix, seed: u64) -> Result<Projection2d, EvalError> {
    let (n, d) = x.shape();
    if n < 2 || d < 2 {
        return Err(EvalError::DegenerateInput("need at least 2 rows and 2 columns"));
    }
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).iter().sum::<f64>() / n as f64).collect();
    let centered: Vec<Vec<f64>> = (0..n)
        .map(|i| x.row(i).iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    if centered.iter().flatten().all(|&v| v == 0.0) {
        return Err(EvalError::DegenerateInput("all rows identical"));
    }
    let mut cov = vec![vec![0.0; d]; d];
    for row in &centered {
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += row[a] * row[b];
            }
        }
    }
    cov.iter_mut().flatten().for_each(|v| *v /= (n - 1) as f64);

    let mut rng = Rng::seed_from(seed);
    let v1 = leading_eigvec(&cov, &mut rng, None);
    let l1: f64 = mat_vec(&cov, &v1).iter().zip(&v1).map(|(a, b)| a * b).sum();
    let deflated: Vec<Vec<f64>> = (0..d)
        .map(|a| (0..d).map(|b| cov[a][b] - l1 * v1[a] * v1[b]).collect())
        .collect();
    let mut v2 = leading_eigvec(&deflated, &mut rng, Some(&v1));
    orthogonalize(&mut v2, &v1);
    let n2 = norm(&v2);
    v2.iter_mut().for_each(|x| *x /= n2);

    let mut data = Vec::with_capacity(2 * n);
    for row in &centered {
        for v in [&v1, &v2] {
            data.push(row.iter().zip(v).map(|(a, b)| a * b).sum());
        }
    }
    let coords = Matrix::new(n, 2, data).map_err(|_| EvalError::NonFiniteScore)?;
    let var = |j: usize| coords.column(j).iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
    let (mut s1, mut s2) = (var(0), var(1));
    let mut components = [v1, v2];
    let mut coords = coords;
    if s2 > s1 {
        // Power iteration can stall between near-equal eigenvalues; keep the order contract.
        let swapped: Vec<f64> = (0..n).flat_map(|i| [coords.get(i, 1), coords.get(i, 0)]).collect();
        coords = Matrix::new(n, 2, swapped).expect("finite");
        components.swap(0, 1);
        std::mem::swap(&mut s1, &mut s2);
    }
    Ok(Projection2d {
        coords,
        variances: [s1, s2],
        components,
        mean,
    })
}
