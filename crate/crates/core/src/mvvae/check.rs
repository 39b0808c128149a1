//! Finite-difference verification of the composite loss gradient on tiny models.

use super::loss::{forward_view, loss_and_grad, sample_eps, Noise};
use super::model::{MvVaeModel, VaeConfig};
use crate::nn::{grad_check, relu_forward, DenseLayer, Matrix, Rng};

/// A tiny two-view model with a fixed batch and fixed reparameterization noise.
#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub model: MvVaeModel,
    pub batch: [Matrix; 2],
    pub eps: [Matrix; 2],
}

const BIAS_MARGIN: f64 = 0.1;

fn lift_biases(layer: &mut DenseLayer, input: &Matrix) -> Matrix {
    let pre = layer.forward(input).expect("shapes fixed by construction");
    for j in 0..layer.output_dim() {
        let low = (0..pre.rows()).map(|r| pre.get(r, j)).fold(f64::INFINITY, f64::min);
        layer.bias[j] += BIAS_MARGIN - low;
    }
    relu_forward(&layer.forward(input).expect("shapes fixed by construction"))
}

/// Per-view input 5, encoder [4, 3], latent 2, decoder [3, 4], batch 3, dropout off.
///
/// Weights are `0.3·N(0,1)` and inputs `0.5·N(0,1)`. Hidden biases are then shifted so
/// every ReLU pre-activation is at least 0.1 on the batch: the loss is smooth around the
/// point and no gradient coordinate is starved by a unit that is dead on most rows
/// (those fall below what h = 1e-5 differences can resolve in 64-bit arithmetic).
pub fn tiny_case(seed: u64) -> GradCheckCase {
    let config = VaeConfig {
        input_dims: [5, 5],
        encoder_hidden: vec![4, 3],
        latent_dim: 2,
        decoder_hidden: vec![3, 4],
        dropout_rate: 0.0,
        batch_size: 3,
        seed,
        ..VaeConfig::default()
    };
    let mut rng = Rng::seed_from(seed).fork(7);
    let mut draw = |rows, cols, scale: f64| {
        let m = sample_eps(rows, cols, &mut rng);
        Matrix::new(rows, cols, m.data().iter().map(|v| scale * v).collect()).expect("finite")
    };
    let batch = [draw(3, 5, 0.5), draw(3, 5, 0.5)];
    let eps = [draw(3, 2, 1.0), draw(3, 2, 1.0)];
    let mut model = MvVaeModel::new(config).expect("valid tiny config");
    let params: Vec<f64> = draw(1, model.param_count(), 0.3).into_data();
    model.set_flat_params(&params).expect("matching length");

    for v in 0..2 {
        let net = &mut model.views[v];
        let mut h = batch[v].clone();
        for layer in net.encoder.iter_mut() {
            h = lift_biases(layer, &h);
        }
        let pass = forward_view(net, &batch[v], 0.0, false, Some(&eps[v]), &mut Rng::seed_from(0))
            .expect("finite tiny forward pass");
        let hidden = net.decoder.len() - 1;
        let mut g = pass.dec_inputs[0].clone();
        for layer in net.decoder[..hidden].iter_mut() {
            g = lift_biases(layer, &g);
        }
    }
    GradCheckCase { model, batch, eps }
}

impl GradCheckCase {
    /// Max relative error between the analytic gradient and central differences.
    pub fn max_rel_error(&self, h: f64) -> f64 {
        let f = |p: &[f64]| {
            let mut m = self.model.clone();
            m.set_flat_params(p).expect("matching length");
            let mut rng = Rng::seed_from(0);
            let (c, g) = loss_and_grad(&m, [&self.batch[0], &self.batch[1]], Noise::Fixed(&self.eps), false, &mut rng)
                .expect("finite loss near a tiny model");
            (c.total, g.flat())
        };
        grad_check(f, &self.model.flat_params(), h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let err = tiny_case(seed).max_rel_error(1e-5);
            assert!(err < 1e-4, "seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn every_hidden_unit_is_active_on_the_batch() {
        let case = tiny_case(11);
        for v in 0..2 {
            let net = &case.model.views[v];
            let mut h = case.batch[v].clone();
            for layer in &net.encoder {
                let pre = layer.forward(&h).unwrap();
                assert!(pre.data().iter().all(|&q| q >= BIAS_MARGIN - 1e-12));
                h = relu_forward(&pre);
            }
        }
    }

    #[test]
    fn detects_a_corrupted_gradient() {
        let case = tiny_case(2);
        let f = |p: &[f64]| {
            let mut m = case.model.clone();
            m.set_flat_params(p).unwrap();
            let mut rng = Rng::seed_from(0);
            let (c, g) =
                loss_and_grad(&m, [&case.batch[0], &case.batch[1]], Noise::Fixed(&case.eps), false, &mut rng).unwrap();
            let mut g = g.flat();
            g[0] *= 1.01;
            (c.total, g)
        };
        assert!(grad_check(f, &case.model.flat_params(), 1e-5) > 1e-3);
    }
}
