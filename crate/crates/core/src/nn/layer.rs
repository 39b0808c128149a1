use serde::{Deserialize, Serialize};

use super::matrix::{axpy, dot};
use super::{Matrix, NnError, Rng};

/// Fully connected layer `y = W x + b` with `W` stored as `[out × in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients of a [`DenseLayer`]'s parameters, same shapes as the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self, NnError> {
        if bias.len() != weights.rows() {
            return Err(NnError::ShapeMismatch {
                context: "dense bias",
                expected: weights.rows(),
                got: bias.len(),
            });
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(NnError::NonFinite("dense bias"));
        }
        Ok(DenseLayer { weights, bias })
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        DenseLayer {
            weights: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    /// He-uniform weights in `±sqrt(6 / fan_in)`, zero bias.
    pub fn he_uniform(input: usize, output: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / input as f64).sqrt();
        let data = (0..input * output)
            .map(|_| (2.0 * rng.uniform() - 1.0) * bound)
            .collect();
        DenseLayer {
            weights: Matrix::from_raw(output, input, data),
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.data().len() + self.bias.len()
    }

    /// Row-wise affine map of a `[batch × in]` input.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix, NnError> {
        if x.cols() != self.input_dim() {
            return Err(NnError::ShapeMismatch {
                context: "dense forward input",
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        let out_dim = self.output_dim();
        let mut out = Vec::with_capacity(x.rows() * out_dim);
        for r in 0..x.rows() {
            let xr = x.row(r);
            for o in 0..out_dim {
                out.push(dot(self.weights.row(o), xr) + self.bias[o]);
            }
        }
        let out = Matrix::from_raw(x.rows(), out_dim, out);
        if !out.is_finite() {
            return Err(NnError::NonFinite("dense forward output"));
        }
        Ok(out)
    }

    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward(&Matrix::row_vector(x)?)?.into_data())
    }

    /// Returns parameter gradients summed over the batch and the gradient w.r.t. the input.
    pub fn backward(&self, x: &Matrix, delta: &Matrix) -> Result<(DenseGrad, Matrix), NnError> {
        if x.cols() != self.input_dim() || x.rows() != delta.rows() {
            return Err(NnError::ShapeMismatch {
                context: "dense backward input",
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        if delta.cols() != self.output_dim() {
            return Err(NnError::ShapeMismatch {
                context: "dense backward upstream",
                expected: self.output_dim(),
                got: delta.cols(),
            });
        }
        let (in_dim, out_dim) = (self.input_dim(), self.output_dim());
        let mut gw = Matrix::zeros(out_dim, in_dim);
        let mut gb = vec![0.0; out_dim];
        let mut gx = Matrix::zeros(x.rows(), in_dim);
        for r in 0..x.rows() {
            let xr = x.row(r);
            let dr = delta.row(r);
            for o in 0..out_dim {
                let d = dr[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                axpy(d, xr, gw.row_mut(o));
                axpy(d, self.weights.row(o), gx.row_mut(r));
            }
        }
        Ok((
            DenseGrad {
                weights: gw,
                bias: gb,
            },
            gx,
        ))
    }
}

impl DenseGrad {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        DenseGrad {
            weights: Matrix::zeros(layer.output_dim(), layer.input_dim()),
            bias: vec![0.0; layer.output_dim()],
        }
    }
}

pub fn relu_forward(x: &Matrix) -> Matrix {
    let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Matrix::from_raw(x.rows(), x.cols(), data)
}

/// Passes `delta` where the pre-activation was strictly positive; the subgradient at 0 is 0.
pub fn relu_backward(pre: &Matrix, delta: &Matrix) -> Result<Matrix, NnError> {
    if pre.shape() != delta.shape() {
        return Err(NnError::ShapeMismatch {
            context: "relu backward",
            expected: pre.data().len(),
            got: delta.data().len(),
        });
    }
    let data = pre
        .data()
        .iter()
        .zip(delta.data())
        .map(|(&p, &d)| if p > 0.0 { d } else { 0.0 })
        .collect();
    Ok(Matrix::from_raw(pre.rows(), pre.cols(), data))
}

/// Per-element multipliers applied by inverted dropout: `0` for dropped units,
/// `1 / (1 - rate)` for survivors, `1` everywhere at inference.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask(pub Vec<f64>);

impl DropoutMask {
    pub fn keep_all(len: usize) -> Self {
        DropoutMask(vec![1.0; len])
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let data = x.data().iter().zip(&self.0).map(|(v, s)| v * s).collect();
        Matrix::from_raw(x.rows(), x.cols(), data)
    }
}

pub fn dropout(
    x: &Matrix,
    rate: f64,
    training: bool,
    rng: &mut Rng,
) -> Result<(Matrix, DropoutMask), NnError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::InvalidRate(rate));
    }
    let n = x.data().len();
    if !training || rate == 0.0 {
        return Ok((x.clone(), DropoutMask::keep_all(n)));
    }
    let scale = 1.0 / (1.0 - rate);
    let mask = DropoutMask(
        (0..n)
            .map(|_| if rng.uniform() < rate { 0.0 } else { scale })
            .collect(),
    );
    Ok((mask.apply(x), mask))
}

/// `λ Σ w²` and its gradient `2 λ w`.
pub fn l2_penalty(weights: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let value = lambda * weights.iter().map(|w| w * w).sum::<f64>();
    let grad = weights.iter().map(|w| 2.0 * lambda * w).collect();
    (value, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;

    fn layer(rows: &[Vec<f64>], bias: Vec<f64>) -> DenseLayer {
        DenseLayer::new(Matrix::from_rows(rows).unwrap(), bias).unwrap()
    }

    #[test]
    fn identity_forward() {
        let l = DenseLayer::new(Matrix::identity(2), vec![0.0, 0.0]).unwrap();
        assert_eq!(l.forward_vec(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn hand_forward() {
        let l = layer(&[vec![1.0, 2.0]], vec![3.0]);
        assert_eq!(l.forward_vec(&[1.0, 1.0]).unwrap(), vec![6.0]);
    }

    #[test]
    fn forward_shape_mismatch() {
        let l = DenseLayer::zeros(2, 1);
        assert!(matches!(
            l.forward_vec(&[1.0, 2.0, 3.0]),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn zero_delta_gives_zero_grads() {
        let mut rng = Rng::seed_from(1);
        let l = DenseLayer::he_uniform(3, 2, &mut rng);
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 0.5]]).unwrap();
        let (g, gx) = l.backward(&x, &Matrix::zeros(1, 2)).unwrap();
        assert!(g.weights.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));
        assert!(gx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn basis_input_puts_delta_in_first_column() {
        let mut rng = Rng::seed_from(2);
        let l = DenseLayer::he_uniform(3, 2, &mut rng);
        let x = Matrix::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let delta = Matrix::from_rows(&[vec![0.7, -1.3]]).unwrap();
        let (g, _) = l.backward(&x, &delta).unwrap();
        assert_eq!(g.weights.column(0), vec![0.7, -1.3]);
        assert_eq!(g.weights.column(1), vec![0.0, 0.0]);
        assert_eq!(g.weights.column(2), vec![0.0, 0.0]);
    }

    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut rng = Rng::seed_from(3);
        // in = 2, out = 3
        let base = DenseLayer::he_uniform(2, 3, &mut rng);
        let x = Matrix::from_rows(&[vec![0.3, -1.1], vec![1.4, 0.2]]).unwrap();
        let target = Matrix::from_rows(&[vec![0.1, 0.2, -0.3], vec![-0.5, 0.4, 0.9]]).unwrap();
        let mut params: Vec<f64> = base.weights.data().to_vec();
        params.extend_from_slice(&base.bias);
        let err = grad_check(
            |p| {
                let l = DenseLayer::new(
                    Matrix::new(3, 2, p[..6].to_vec()).unwrap(),
                    p[6..].to_vec(),
                )
                .unwrap();
                let y = l.forward(&x).unwrap();
                // L = ½ Σ (y - t)²
                let diff: Vec<f64> = y.data().iter().zip(target.data()).map(|(a, b)| a - b).collect();
                let loss = 0.5 * diff.iter().map(|d| d * d).sum::<f64>();
                let (g, _) = l.backward(&x, &Matrix::new(2, 3, diff).unwrap()).unwrap();
                let mut grad = g.weights.data().to_vec();
                grad.extend_from_slice(&g.bias);
                (loss, grad)
            },
            &params,
            1e-5,
        );
        assert!(err < 1e-5, "rel err {err}");
    }

    #[test]
    fn relu_values_and_zero_subgradient() {
        let x = Matrix::from_rows(&[vec![-1.0, 0.0, 2.0]]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
        let d = Matrix::from_rows(&[vec![5.0, 5.0, 5.0]]).unwrap();
        assert_eq!(relu_backward(&x, &d).unwrap().data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn relu_gradient_check_away_from_kink() {
        let mut rng = Rng::seed_from(11);
        let xs: Vec<f64> = (0..16)
            .map(|_| {
                let v = rng.normal();
                if v.abs() < 1e-3 { 0.5 } else { v }
            })
            .collect();
        let err = grad_check(
            |p| {
                let m = Matrix::new(1, p.len(), p.to_vec()).unwrap();
                let y = relu_forward(&m);
                // L = Σ relu(x)² / 2
                let loss = 0.5 * y.sum_sq();
                let g = relu_backward(&m, &y).unwrap();
                (loss, g.into_data())
            },
            &xs,
            1e-5,
        );
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn dropout_inference_and_zero_rate_are_identity() {
        let mut rng = Rng::seed_from(0);
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0]]).unwrap();
        let (y, _) = dropout(&x, 0.5, false, &mut rng).unwrap();
        assert_eq!(y, x);
        let (y, mask) = dropout(&x, 0.0, true, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(mask.0.iter().all(|&s| s == 1.0));
        assert!(matches!(
            dropout(&x, 1.0, true, &mut rng),
            Err(NnError::InvalidRate(_))
        ));
    }

    #[test]
    fn dropout_is_unbiased() {
        let mut rng = Rng::seed_from(9);
        let n = 100_000;
        let x = Matrix::new(1, n, vec![1.0; n]).unwrap();
        let (y, _) = dropout(&x, 0.1, true, &mut rng).unwrap();
        let mean = y.data().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn l2_closed_form() {
        let (v, g) = l2_penalty(&[0.0, 0.0], 1e-4);
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
        let (v, g) = l2_penalty(&[2.0], 1e-4);
        assert!((v - 4e-4).abs() < 1e-18);
        assert!((g[0] - 4e-4).abs() < 1e-18);
    }

    #[test]
    fn l2_gradient_check() {
        let w = [0.3, -1.2, 2.5, 0.01];
        let err = grad_check(|p| l2_penalty(p, 0.7), &w, 1e-5);
        assert!(err < 1e-7, "rel err {err}");
    }
}
