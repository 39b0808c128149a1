//! Self-describing JSON checkpoint: versioned header, config and every parameter
//! array keyed `<view>.<layer>.<W|b>`. Keys are sorted, so identical models
//! serialize to identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{MvVaeModel, VaeConfig};
use super::VaeError;
use crate::dataset::Preprocessor;

pub const CHECKPOINT_FORMAT: &str = "mvlatent-mvvae-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: VaeConfig,
    pub params: BTreeMap<String, ParamArray>,
    /// Imputation and normalization fitted alongside the model, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocessing: Option<Preprocessor>,
}

impl Checkpoint {
    pub fn from_model(model: &MvVaeModel, preprocessing: Option<Preprocessor>) -> Self {
        let mut params = BTreeMap::new();
        for (name, layer) in model.named_layers() {
            params.insert(
                format!("{name}.W"),
                ParamArray {
                    shape: vec![layer.weights.rows(), layer.weights.cols()],
                    data: layer.weights.data().to_vec(),
                },
            );
            params.insert(
                format!("{name}.b"),
                ParamArray {
                    shape: vec![layer.bias.len()],
                    data: layer.bias.clone(),
                },
            );
        }
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            params,
            preprocessing,
        }
    }

    pub fn to_model(&self) -> Result<MvVaeModel, VaeError> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(VaeError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let mut model = MvVaeModel::new(self.config.clone())?;
        let names: Vec<String> = model.named_layers().into_iter().map(|(n, _)| n).collect();
        if self.params.len() != 2 * names.len() {
            return Err(VaeError::Checkpoint(format!(
                "expected {} arrays, found {}",
                2 * names.len(),
                self.params.len()
            )));
        }
        for (name, layer) in names.iter().zip(model.layers_mut()) {
            let fetch = |suffix: &str, shape: Vec<usize>| -> Result<Vec<f64>, VaeError> {
                let key = format!("{name}.{suffix}");
                let arr = self
                    .params
                    .get(&key)
                    .ok_or_else(|| VaeError::Checkpoint(format!("missing array `{key}`")))?;
                if arr.shape != shape || arr.data.len() != shape.iter().product::<usize>() {
                    return Err(VaeError::Checkpoint(format!("array `{key}` has wrong shape")));
                }
                if arr.data.iter().any(|v| !v.is_finite()) {
                    return Err(VaeError::Checkpoint(format!("array `{key}` is not finite")));
                }
                Ok(arr.data.clone())
            };
            let w = fetch("W", vec![layer.weights.rows(), layer.weights.cols()])?;
            let b = fetch("b", vec![layer.bias.len()])?;
            layer.weights.data_mut().copy_from_slice(&w);
            layer.bias = b;
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("checkpoint serializes");
        out.push(b'\n');
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), VaeError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| VaeError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, VaeError> {
        let bytes = std::fs::read(path).map_err(|e| VaeError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_slice(&bytes).map_err(|e| VaeError::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Rng;

    fn model() -> MvVaeModel {
        let mut m = MvVaeModel::new(VaeConfig {
            input_dims: [6, 4],
            encoder_hidden: vec![5, 3],
            latent_dim: 2,
            decoder_hidden: vec![3, 5],
            seed: 12,
            ..VaeConfig::default()
        })
        .unwrap();
        let mut rng = Rng::seed_from(1);
        let p: Vec<f64> = (0..m.param_count()).map(|_| rng.normal()).collect();
        m.set_flat_params(&p).unwrap();
        m
    }

    #[test]
    fn round_trip_and_byte_stability() {
        let m = model();
        let ck = Checkpoint::from_model(&m, None);
        let bytes = ck.to_bytes();
        assert_eq!(bytes, Checkpoint::from_model(&m.clone(), None).to_bytes());
        let back: Checkpoint = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(back.to_model().unwrap(), m);
        assert!(ck.params.contains_key("t1gd.encoder.0.W"));
        assert!(ck.params.contains_key("flair.decoder.2.b"));
        assert_eq!(ck.params["flair.mu.W"].shape, vec![2, 3]);
    }

    #[test]
    fn rejects_tampered_checkpoints() {
        let mut ck = Checkpoint::from_model(&model(), None);
        ck.params.remove("t1gd.mu.b");
        assert!(ck.to_model().is_err());
        let mut ck = Checkpoint::from_model(&model(), None);
        ck.version = 99;
        assert!(ck.to_model().is_err());
    }
}
