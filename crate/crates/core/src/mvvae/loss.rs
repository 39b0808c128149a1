//! Composite objective `Σ_m recon_m + β Σ_m KL_m + λ Σ‖W‖²` and its exact gradient.
//!
//! Reconstruction is the squared error summed over features and averaged over the
//! batch; KL is summed over latent dimensions and averaged over the batch.

use serde::{Deserialize, Serialize};

use super::model::{view_index, MvVaeModel, ViewNet, LOGVAR_MAX, LOGVAR_MIN};
use super::VaeError;
use crate::dataset::Modality;
use crate::nn::{
    dropout, l2_penalty, relu_backward, relu_forward, DenseGrad, DropoutMask, Matrix, NnError, Rng,
};

/// Source of the reparameterization noise `ε`.
#[derive(Debug, Clone, Copy)]
pub enum Noise<'a> {
    /// One standard-normal draw per sample per view.
    Sample,
    /// `ε = 0`, i.e. decode the posterior mean.
    Zero,
    /// Caller-supplied `ε` per view, each `[batch × latent_dim]`.
    Fixed(&'a [Matrix; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub total: f64,
    /// Indexed T1Gd then FLAIR.
    pub recon: [f64; 2],
    pub kl: [f64; 2],
    pub l2: f64,
}

/// Gradients for every layer in [`MvVaeModel::layers`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads(pub Vec<DenseGrad>);

impl ModelGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.0 {
            out.extend_from_slice(g.weights.data());
            out.extend_from_slice(&g.bias);
        }
        out
    }
}

pub(super) struct ViewPass {
    enc_inputs: Vec<Matrix>,
    enc_pre: Vec<Matrix>,
    masks: Vec<DropoutMask>,
    head_input: Matrix,
    mu: Matrix,
    logvar_raw: Matrix,
    logvar: Matrix,
    eps: Matrix,
    pub(super) dec_inputs: Vec<Matrix>,
    dec_pre: Vec<Matrix>,
    xhat: Matrix,
}

pub(super) fn forward_view(
    net: &ViewNet,
    x: &Matrix,
    dropout_rate: f64,
    training: bool,
    eps: Option<&Matrix>,
    rng: &mut Rng,
) -> Result<ViewPass, VaeError> {
    let mut enc_inputs = Vec::new();
    let mut enc_pre = Vec::new();
    let mut masks = Vec::new();
    let mut h = x.clone();
    for layer in &net.encoder {
        let pre = layer.forward(&h)?;
        let (out, mask) = dropout(&relu_forward(&pre), dropout_rate, training, rng)?;
        enc_inputs.push(std::mem::replace(&mut h, out));
        enc_pre.push(pre);
        masks.push(mask);
    }
    let mu = net.mu_head.forward(&h)?;
    let logvar_raw = net.logvar_head.forward(&h)?;
    let mut logvar = logvar_raw.clone();
    logvar
        .data_mut()
        .iter_mut()
        .for_each(|v| *v = v.clamp(LOGVAR_MIN, LOGVAR_MAX));

    let (b, k) = mu.shape();
    let eps = match eps {
        Some(e) => {
            if e.shape() != (b, k) {
                return Err(NnError::ShapeMismatch {
                    context: "fixed noise",
                    expected: b * k,
                    got: e.data().len(),
                }
                .into());
            }
            e.clone()
        }
        None => Matrix::zeros(b, k),
    };
    let mut z = mu.clone();
    for ((zi, lv), e) in z.data_mut().iter_mut().zip(logvar.data()).zip(eps.data()) {
        *zi += (0.5 * lv).exp() * e;
    }

    let (out_layer, hidden) = net.decoder.split_last().expect("decoder output layer");
    let mut dec_inputs = Vec::new();
    let mut dec_pre = Vec::new();
    let mut g = z;
    for layer in hidden {
        let pre = layer.forward(&g)?;
        let next = relu_forward(&pre);
        dec_inputs.push(std::mem::replace(&mut g, next));
        dec_pre.push(pre);
    }
    let xhat = out_layer.forward(&g)?;
    dec_inputs.push(g);

    Ok(ViewPass {
        enc_inputs,
        enc_pre,
        masks,
        head_input: h,
        mu,
        logvar_raw,
        logvar,
        eps,
        dec_inputs,
        dec_pre,
        xhat,
    })
}

fn view_terms(pass: &ViewPass, x: &Matrix) -> (f64, f64) {
    let b = x.rows() as f64;
    let recon: f64 = pass
        .xhat
        .data()
        .iter()
        .zip(x.data())
        .map(|(a, t)| (a - t) * (a - t))
        .sum::<f64>()
        / b;
    let k = pass.mu.cols();
    let kl: f64 = (0..x.rows())
        .map(|i| {
            super::model::kl_diag_gaussian(
                &pass.mu.data()[i * k..(i + 1) * k],
                &pass.logvar.data()[i * k..(i + 1) * k],
            )
        })
        .sum::<f64>()
        / b;
    (recon, kl)
}

fn backward_view(net: &ViewNet, pass: &ViewPass, x: &Matrix, beta: f64) -> Result<Vec<DenseGrad>, VaeError> {
    let b = x.rows() as f64;
    let mut d = pass.xhat.clone();
    for (v, t) in d.data_mut().iter_mut().zip(x.data()) {
        *v = 2.0 * (*v - t) / b;
    }

    let n_dec = net.decoder.len();
    let mut dec_grads = Vec::with_capacity(n_dec);
    let (g, mut dz) = net.decoder[n_dec - 1].backward(&pass.dec_inputs[n_dec - 1], &d)?;
    dec_grads.push(g);
    for k in (0..n_dec - 1).rev() {
        let dpre = relu_backward(&pass.dec_pre[k], &dz)?;
        let (g, dx) = net.decoder[k].backward(&pass.dec_inputs[k], &dpre)?;
        dec_grads.push(g);
        dz = dx;
    }
    dec_grads.reverse();

    let kl_scale = beta / b;
    let mut dmu = dz.clone();
    for (g, m) in dmu.data_mut().iter_mut().zip(pass.mu.data()) {
        *g += kl_scale * m;
    }
    let mut dlv = dz;
    for (((g, &lv), &raw), &e) in dlv
        .data_mut()
        .iter_mut()
        .zip(pass.logvar.data())
        .zip(pass.logvar_raw.data())
        .zip(pass.eps.data())
    {
        *g = if (LOGVAR_MIN..=LOGVAR_MAX).contains(&raw) {
            *g * e * 0.5 * (0.5 * lv).exp() + kl_scale * 0.5 * (lv.exp() - 1.0)
        } else {
            0.0
        };
    }

    let (g_mu, dh_mu) = net.mu_head.backward(&pass.head_input, &dmu)?;
    let (g_lv, dh_lv) = net.logvar_head.backward(&pass.head_input, &dlv)?;
    let mut dh = dh_mu;
    for (a, c) in dh.data_mut().iter_mut().zip(dh_lv.data()) {
        *a += c;
    }

    let n_enc = net.encoder.len();
    let mut enc_grads = Vec::with_capacity(n_enc);
    for l in (0..n_enc).rev() {
        let dact = pass.masks[l].apply(&dh);
        let dpre = relu_backward(&pass.enc_pre[l], &dact)?;
        let (g, dx) = net.encoder[l].backward(&pass.enc_inputs[l], &dpre)?;
        enc_grads.push(g);
        dh = dx;
    }
    enc_grads.reverse();

    let mut out = enc_grads;
    out.push(g_mu);
    out.push(g_lv);
    out.extend(dec_grads);
    Ok(out)
}

fn check_batch(model: &MvVaeModel, batch: [&Matrix; 2]) -> Result<(), VaeError> {
    if batch[0].rows() == 0 {
        return Err(VaeError::EmptyBatch);
    }
    if batch[0].rows() != batch[1].rows() {
        return Err(NnError::ShapeMismatch {
            context: "paired batch rows",
            expected: batch[0].rows(),
            got: batch[1].rows(),
        }
        .into());
    }
    for m in Modality::ALL {
        let x = batch[view_index(m)];
        if x.cols() != model.config.input_dim(m) {
            return Err(NnError::ShapeMismatch {
                context: "view features",
                expected: model.config.input_dim(m),
                got: x.cols(),
            }
            .into());
        }
    }
    Ok(())
}

fn l2_total(model: &MvVaeModel) -> f64 {
    model
        .layers()
        .iter()
        .map(|l| l2_penalty(l.weights.data(), model.config.l2_lambda).0)
        .sum()
}

/// Composite loss and its gradient for a paired batch `[T1Gd, FLAIR]`.
pub fn loss_and_grad(
    model: &MvVaeModel,
    batch: [&Matrix; 2],
    noise: Noise<'_>,
    training: bool,
    rng: &mut Rng,
) -> Result<(LossComponents, ModelGrads), VaeError> {
    check_batch(model, batch)?;
    let cfg = &model.config;
    let rate = if training { cfg.dropout_rate } else { 0.0 };
    let mut comps = LossComponents {
        total: 0.0,
        recon: [0.0; 2],
        kl: [0.0; 2],
        l2: 0.0,
    };
    let mut grads = Vec::new();
    for m in Modality::ALL {
        let v = view_index(m);
        let x = batch[v];
        let eps = match noise {
            Noise::Sample => Some(sample_eps(x.rows(), cfg.latent_dim, rng)),
            Noise::Zero => None,
            Noise::Fixed(e) => Some(e[v].clone()),
        };
        let net = &model.views[v];
        let pass = forward_view(net, x, rate, training, eps.as_ref(), rng)?;
        let (recon, kl) = view_terms(&pass, x);
        comps.recon[v] = recon;
        comps.kl[v] = kl;
        grads.extend(backward_view(net, &pass, x, cfg.beta)?);
    }
    for (g, l) in grads.iter_mut().zip(model.layers()) {
        let (_, lg) = l2_penalty(l.weights.data(), cfg.l2_lambda);
        for (a, b) in g.weights.data_mut().iter_mut().zip(lg) {
            *a += b;
        }
    }
    comps.l2 = l2_total(model);
    comps.total = comps.recon[0] + comps.recon[1] + cfg.beta * (comps.kl[0] + comps.kl[1]) + comps.l2;
    if !comps.total.is_finite() {
        return Err(VaeError::NonFiniteLoss);
    }
    Ok((comps, ModelGrads(grads)))
}

/// Composite loss without gradients.
pub fn loss(
    model: &MvVaeModel,
    batch: [&Matrix; 2],
    noise: Noise<'_>,
    training: bool,
    rng: &mut Rng,
) -> Result<LossComponents, VaeError> {
    check_batch(model, batch)?;
    let cfg = &model.config;
    let rate = if training { cfg.dropout_rate } else { 0.0 };
    let mut comps = LossComponents {
        total: 0.0,
        recon: [0.0; 2],
        kl: [0.0; 2],
        l2: l2_total(model),
    };
    for m in Modality::ALL {
        let v = view_index(m);
        let x = batch[v];
        let eps = match noise {
            Noise::Sample => Some(sample_eps(x.rows(), cfg.latent_dim, rng)),
            Noise::Zero => None,
            Noise::Fixed(e) => Some(e[v].clone()),
        };
        let pass = forward_view(&model.views[v], x, rate, training, eps.as_ref(), rng)?;
        let (recon, kl) = view_terms(&pass, x);
        comps.recon[v] = recon;
        comps.kl[v] = kl;
    }
    comps.total = comps.recon[0] + comps.recon[1] + cfg.beta * (comps.kl[0] + comps.kl[1]) + comps.l2;
    if !comps.total.is_finite() {
        return Err(VaeError::NonFiniteLoss);
    }
    Ok(comps)
}

pub fn sample_eps(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.normal()).collect();
    Matrix::new(rows, cols, data).expect("finite normal draws")
}
