use serde::{Deserialize, Serialize};

use super::VaeError;
use crate::dataset::Modality;
use crate::nn::{dropout, relu_forward, DenseLayer, Matrix, NnError, Rng};

pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    /// Feature count per view, indexed T1Gd then FLAIR.
    pub input_dims: [usize; 2],
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub decoder_hidden: Vec<usize>,
    pub dropout_rate: f64,
    pub l2_lambda: f64,
    pub beta: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub lr_factor: f64,
    pub lr_patience: usize,
    pub lr_floor: f64,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            input_dims: [144, 144],
            encoder_hidden: vec![128, 64],
            latent_dim: 6,
            decoder_hidden: vec![64, 128],
            dropout_rate: 0.1,
            l2_lambda: 1e-4,
            beta: 0.3,
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 500,
            patience: 20,
            min_delta: 1e-4,
            lr_factor: 0.5,
            lr_patience: 10,
            lr_floor: 1e-6,
            seed: 0,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<(), VaeError> {
        let sizes_ok = self.input_dims.iter().all(|&d| d > 0)
            && self.encoder_hidden.iter().all(|&d| d > 0)
            && self.decoder_hidden.iter().all(|&d| d > 0)
            && self.latent_dim > 0
            && self.batch_size > 0;
        if !sizes_ok {
            return Err(VaeError::InvalidConfig("layer sizes and batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(VaeError::InvalidConfig(format!("dropout_rate {} outside [0, 1)", self.dropout_rate)));
        }
        if !(self.beta >= 0.0 && self.l2_lambda >= 0.0 && self.lr >= 0.0) {
            return Err(VaeError::InvalidConfig("beta, l2_lambda and lr must be non-negative".into()));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) {
            return Err(VaeError::InvalidConfig(format!("lr_factor {} outside (0, 1]", self.lr_factor)));
        }
        Ok(())
    }

    pub fn input_dim(&self, m: Modality) -> usize {
        self.input_dims[view_index(m)]
    }
}

pub(crate) fn view_index(m: Modality) -> usize {
    match m {
        Modality::T1Gd => 0,
        Modality::Flair => 1,
    }
}

/// Encoder trunk, Gaussian heads and decoder of one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewNet {
    pub encoder: Vec<DenseLayer>,
    pub mu_head: DenseLayer,
    pub logvar_head: DenseLayer,
    /// Hidden decoder layers followed by the linear output layer.
    pub decoder: Vec<DenseLayer>,
}

impl ViewNet {
    fn init(input: usize, cfg: &VaeConfig, rng: &mut Rng) -> Self {
        let mut encoder = Vec::new();
        let mut width = input;
        for &h in &cfg.encoder_hidden {
            encoder.push(DenseLayer::he_uniform(width, h, rng));
            width = h;
        }
        let mu_head = DenseLayer::zeros(width, cfg.latent_dim);
        let logvar_head = DenseLayer::zeros(width, cfg.latent_dim);
        let mut decoder = Vec::new();
        let mut width = cfg.latent_dim;
        for &h in &cfg.decoder_hidden {
            decoder.push(DenseLayer::he_uniform(width, h, rng));
            width = h;
        }
        decoder.push(DenseLayer::zeros(width, input));
        ViewNet {
            encoder,
            mu_head,
            logvar_head,
            decoder,
        }
    }

    /// Layers in parameter order with their checkpoint names.
    pub(crate) fn named_layers(&self) -> Vec<(String, &DenseLayer)> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.iter().enumerate() {
            out.push((format!("encoder.{i}"), l));
        }
        out.push(("mu".to_string(), &self.mu_head));
        out.push(("logvar".to_string(), &self.logvar_head));
        for (i, l) in self.decoder.iter().enumerate() {
            out.push((format!("decoder.{i}"), l));
        }
        out
    }

    pub(crate) fn layers_mut(&mut self) -> Vec<&mut DenseLayer> {
        let mut out: Vec<&mut DenseLayer> = self.encoder.iter_mut().collect();
        out.push(&mut self.mu_head);
        out.push(&mut self.logvar_head);
        out.extend(self.decoder.iter_mut());
        out
    }
}

/// Posterior parameters for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeOutput {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvVaeModel {
    pub config: VaeConfig,
    /// Indexed T1Gd then FLAIR.
    pub views: [ViewNet; 2],
}

impl MvVaeModel {
    /// He-uniform hidden layers; zero biases, zero Gaussian heads and zero decoder output layers.
    pub fn new(config: VaeConfig) -> Result<Self, VaeError> {
        config.validate()?;
        let mut rng = Rng::seed_from(config.seed).fork(0);
        let t1 = ViewNet::init(config.input_dims[0], &config, &mut rng);
        let fl = ViewNet::init(config.input_dims[1], &config, &mut rng);
        Ok(MvVaeModel {
            config,
            views: [t1, fl],
        })
    }

    pub fn view(&self, m: Modality) -> &ViewNet {
        &self.views[view_index(m)]
    }

    pub fn named_layers(&self) -> Vec<(String, &DenseLayer)> {
        let mut out = Vec::new();
        for m in Modality::ALL {
            for (name, l) in self.view(m).named_layers() {
                out.push((format!("{}.{name}", m.as_str()), l));
            }
        }
        out
    }

    pub fn layers(&self) -> Vec<&DenseLayer> {
        self.named_layers().into_iter().map(|(_, l)| l).collect()
    }

    pub fn layers_mut(&mut self) -> Vec<&mut DenseLayer> {
        let [a, b] = &mut self.views;
        let mut out = a.layers_mut();
        out.extend(b.layers_mut());
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    /// All parameters flattened in layer order, each layer `W` then `b`.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat_params(&mut self, p: &[f64]) -> Result<(), VaeError> {
        if p.len() != self.param_count() {
            return Err(NnError::ShapeMismatch {
                context: "flat parameters",
                expected: self.param_count(),
                got: p.len(),
            }
            .into());
        }
        let mut k = 0;
        for l in self.layers_mut() {
            let nw = l.weights.data().len();
            l.weights.data_mut().copy_from_slice(&p[k..k + nw]);
            k += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&p[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    fn check_input(&self, x: &Matrix, m: Modality) -> Result<(), VaeError> {
        if x.cols() != self.config.input_dim(m) {
            return Err(NnError::ShapeMismatch {
                context: "encoder input",
                expected: self.config.input_dim(m),
                got: x.cols(),
            }
            .into());
        }
        Ok(())
    }

    /// Posterior means and clamped log-variances for a batch `[rows × input_dim]`.
    pub fn encode_batch(
        &self,
        x: &Matrix,
        m: Modality,
        training: bool,
        rng: &mut Rng,
    ) -> Result<(Matrix, Matrix), VaeError> {
        self.check_input(x, m)?;
        let net = self.view(m);
        let rate = if training { self.config.dropout_rate } else { 0.0 };
        let mut h = x.clone();
        for layer in &net.encoder {
            let a = relu_forward(&layer.forward(&h)?);
            h = dropout(&a, rate, training, rng)?.0;
        }
        let mu = net.mu_head.forward(&h)?;
        let mut logvar = net.logvar_head.forward(&h)?;
        logvar
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = v.clamp(LOGVAR_MIN, LOGVAR_MAX));
        Ok((mu, logvar))
    }

    pub fn encode(&self, x: &[f64], m: Modality, training: bool, rng: &mut Rng) -> Result<EncodeOutput, VaeError> {
        let (mu, logvar) = self.encode_batch(&Matrix::row_vector(x)?, m, training, rng)?;
        Ok(EncodeOutput {
            mu: mu.into_data(),
            logvar: logvar.into_data(),
        })
    }

    pub fn decode_batch(&self, z: &Matrix, m: Modality) -> Result<Matrix, VaeError> {
        if z.cols() != self.config.latent_dim {
            return Err(NnError::ShapeMismatch {
                context: "decoder input",
                expected: self.config.latent_dim,
                got: z.cols(),
            }
            .into());
        }
        let net = self.view(m);
        let (out, hidden) = net.decoder.split_last().expect("decoder has an output layer");
        let mut h = z.clone();
        for layer in hidden {
            h = relu_forward(&layer.forward(&h)?);
        }
        Ok(out.forward(&h)?)
    }

    pub fn decode(&self, z: &[f64], m: Modality) -> Result<Vec<f64>, VaeError> {
        Ok(self.decode_batch(&Matrix::row_vector(z)?, m)?.into_data())
    }

    /// Fused embedding `[μ_T1Gd | μ_FLAIR]` per row, dropout off, no sampling.
    pub fn embed(&self, t1gd: &Matrix, flair: &Matrix) -> Result<Matrix, VaeError> {
        // no randomness is consumed when training = false
        let mut rng = Rng::seed_from(0);
        let (mu_t, _) = self.encode_batch(t1gd, Modality::T1Gd, false, &mut rng)?;
        let (mu_f, _) = self.encode_batch(flair, Modality::Flair, false, &mut rng)?;
        Ok(Matrix::hconcat(&mu_t, &mu_f)?)
    }
}

/// `z = mu + exp(logvar / 2) ⊙ eps`
pub fn reparameterize(enc: &EncodeOutput, eps: &[f64]) -> Result<Vec<f64>, VaeError> {
    if eps.len() != enc.mu.len() || enc.logvar.len() != enc.mu.len() {
        return Err(NnError::ShapeMismatch {
            context: "reparameterize",
            expected: enc.mu.len(),
            got: eps.len(),
        }
        .into());
    }
    Ok(enc
        .mu
        .iter()
        .zip(&enc.logvar)
        .zip(eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect())
}

/// `KL(N(mu, diag(exp(logvar))) || N(0, I)) = ½ Σ (mu² + exp(logvar) − logvar − 1)`
pub fn kl_diag_gaussian(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - lv - 1.0)
        .sum::<f64>()
}
