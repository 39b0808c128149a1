//! Flat `key = value` run configuration.
//!
//! One entry per line, dotted keys for nesting, `#` starts a comment. List values
//! are comma separated. Keys:
//!
//! | key | value |
//! |---|---|
//! | `mode` | `synth` or `files` |
//! | `seed` | master seed (required) |
//! | `out_dir` | output directory |
//! | `data.t1gd`, `data.flair`, `data.clinical` | CSV paths (files mode) |
//! | `synth.n`, `synth.d`, `synth.latent_dim`, `synth.private_dim` | generator sizes |
//! | `synth.signal_strength`, `synth.noise_sigma`, `synth.private_scale`, `synth.distractor_fraction` | generator scales |
//! | `synth.seed` | generator seed, defaults to `seed` |
//! | `split.test_fraction`, `split.cv_folds`, `split.vae_val_fraction` | split protocol |
//! | `vae.*` | any `VaeConfig` field except `input_dims` and `seed`; hidden sizes as lists |
//! | `rf.*` | baseline forest: `n_estimators`, `max_depth` (`none` for unlimited), `max_features`, `min_samples_split`, `min_samples_leaf`, `criterion`, `bootstrap` |
//! | `grid.*` | lists for `n_estimators`, `max_depth`, `max_features`, `min_samples_split`, `min_samples_leaf` |

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::SynthParams;
use crate::eval::ExperimentConfig;
use crate::forest::{Criterion, MaxFeatures};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("config file not found: {0}")]
    ConfigNotFound(String),
    #[error("config key `{key}`: {reason}")]
    SchemaViolation { key: String, reason: String },
    #[error("config line {line}: {reason}")]
    Syntax { line: usize, reason: String },
}

fn violation(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::SchemaViolation {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files { t1gd: PathBuf, flair: PathBuf, clinical: PathBuf },
    Synth(SynthParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub seed: u64,
    pub experiment: ExperimentConfig,
    pub out_dir: PathBuf,
}

pub const DEFAULT_OUT_DIR: &str = "mvlatent-out";

/// Parses `key = value` lines. Later duplicates are an error, not an override.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = k.trim().to_string();
        let value = v.trim().trim_matches('"').to_string();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                reason: "empty key".into(),
            });
        }
        if map.insert(key.clone(), value).is_some() {
            return Err(violation(&key, "given twice"));
        }
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|_| ConfigError::ConfigNotFound(path.display().to_string()))?;
    parse_flat(&text)
}

/// Splits a `--set key=value` argument.
pub fn parse_assignment(s: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| violation(s, "expected key=value"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn scalar<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    v.parse().map_err(|e: T::Err| violation(key, format!("cannot parse `{v}`: {e}")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: Display,
{
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| scalar(key, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(violation(key, "empty list"));
    }
    Ok(items)
}

fn depth(key: &str, v: &str) -> Result<Option<usize>, ConfigError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "none" | "unlimited" => Ok(None),
        s => scalar(key, s).map(Some),
    }
}

fn depth_list(key: &str, v: &str) -> Result<Vec<Option<usize>>, ConfigError> {
    let items: Vec<Option<usize>> = v
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| depth(key, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(violation(key, "empty list"));
    }
    Ok(items)
}

fn boolean(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(violation(key, format!("expected true or false, got `{v}`"))),
    }
}

/// Resolves a merged key map into a full config with defaults filled.
pub fn resolve(map: &BTreeMap<String, String>) -> Result<RunConfig, ConfigError> {
    let mut exp = ExperimentConfig::default();
    let mut synth = SynthParams::default();
    let mut seed: Option<u64> = None;
    let mut synth_seed: Option<u64> = None;
    let mut paths: [Option<PathBuf>; 3] = [None, None, None];
    let mut out_dir = PathBuf::from(DEFAULT_OUT_DIR);
    let mut mode: Option<String> = None;
    let mut saw_synth = false;

    for (key, v) in map {
        let k = key.as_str();
        match k {
            "seed" => seed = Some(scalar(k, v)?),
            "mode" => match v.as_str() {
                "synth" | "files" => mode = Some(v.clone()),
                _ => return Err(violation(k, format!("expected `synth` or `files`, got `{v}`"))),
            },
            "out_dir" => out_dir = PathBuf::from(v),
            "data.t1gd" => paths[0] = Some(PathBuf::from(v)),
            "data.flair" => paths[1] = Some(PathBuf::from(v)),
            "data.clinical" => paths[2] = Some(PathBuf::from(v)),

            "split.test_fraction" => exp.test_fraction = scalar(k, v)?,
            "split.cv_folds" => exp.cv_folds = scalar(k, v)?,
            "split.vae_val_fraction" => exp.vae_val_fraction = scalar(k, v)?,

            "vae.encoder_hidden" => exp.vae.encoder_hidden = list(k, v)?,
            "vae.latent_dim" => exp.vae.latent_dim = scalar(k, v)?,
            "vae.decoder_hidden" => exp.vae.decoder_hidden = list(k, v)?,
            "vae.dropout_rate" => exp.vae.dropout_rate = scalar(k, v)?,
            "vae.l2_lambda" => exp.vae.l2_lambda = scalar(k, v)?,
            "vae.beta" => exp.vae.beta = scalar(k, v)?,
            "vae.lr" => exp.vae.lr = scalar(k, v)?,
            "vae.batch_size" => exp.vae.batch_size = scalar(k, v)?,
            "vae.max_epochs" => exp.vae.max_epochs = scalar(k, v)?,
            "vae.patience" => exp.vae.patience = scalar(k, v)?,
            "vae.min_delta" => exp.vae.min_delta = scalar(k, v)?,
            "vae.lr_factor" => exp.vae.lr_factor = scalar(k, v)?,
            "vae.lr_patience" => exp.vae.lr_patience = scalar(k, v)?,
            "vae.lr_floor" => exp.vae.lr_floor = scalar(k, v)?,

            "rf.n_estimators" => exp.rf.n_estimators = scalar(k, v)?,
            "rf.max_depth" => exp.rf.max_depth = depth(k, v)?,
            "rf.max_features" => exp.rf.max_features = scalar::<MaxFeatures>(k, v)?,
            "rf.min_samples_split" => exp.rf.min_samples_split = scalar(k, v)?,
            "rf.min_samples_leaf" => exp.rf.min_samples_leaf = scalar(k, v)?,
            "rf.criterion" => exp.rf.criterion = scalar::<Criterion>(k, v)?,
            "rf.bootstrap" => exp.rf.bootstrap = boolean(k, v)?,

            "grid.n_estimators" => exp.grid.n_estimators = list(k, v)?,
            "grid.max_depth" => exp.grid.max_depth = depth_list(k, v)?,
            "grid.max_features" => exp.grid.max_features = list(k, v)?,
            "grid.min_samples_split" => exp.grid.min_samples_split = list(k, v)?,
            "grid.min_samples_leaf" => exp.grid.min_samples_leaf = list(k, v)?,

            _ if k.starts_with("synth.") => {
                saw_synth = true;
                match &k["synth.".len()..] {
                    "n" => synth.n = scalar(k, v)?,
                    "d" => synth.d = scalar(k, v)?,
                    "latent_dim" => synth.latent_dim = scalar(k, v)?,
                    "private_dim" => synth.private_dim = scalar(k, v)?,
                    "signal_strength" => synth.signal_strength = scalar(k, v)?,
                    "noise_sigma" => synth.noise_sigma = scalar(k, v)?,
                    "private_scale" => synth.private_scale = scalar(k, v)?,
                    "distractor_fraction" => synth.distractor_fraction = scalar(k, v)?,
                    "seed" => synth_seed = Some(scalar(k, v)?),
                    _ => return Err(violation(k, "unknown key")),
                }
            }
            _ => return Err(violation(k, "unknown key")),
        }
    }

    let seed = seed.ok_or_else(|| violation("seed", "required (set it in the file or pass --seed)"))?;
    exp.seed = seed;
    synth.seed = synth_seed.unwrap_or(seed);

    let any_path = paths.iter().any(Option::is_some);
    let mode = mode.unwrap_or_else(|| if any_path { "files".into() } else { "synth".into() });
    let data = if mode == "files" {
        if saw_synth {
            return Err(violation("mode", "synthetic parameters given in files mode"));
        }
        let names = ["data.t1gd", "data.flair", "data.clinical"];
        let [t1gd, flair, clinical] = paths;
        let missing = [&t1gd, &flair, &clinical]
            .iter()
            .zip(names)
            .find(|(p, _)| p.is_none())
            .map(|(_, n)| n);
        if let Some(name) = missing {
            return Err(violation(name, "required in files mode"));
        }
        DataSource::Files {
            t1gd: t1gd.expect("checked"),
            flair: flair.expect("checked"),
            clinical: clinical.expect("checked"),
        }
    } else {
        if any_path {
            return Err(violation("mode", "data paths given in synth mode"));
        }
        DataSource::Synth(synth)
    };

    if !(exp.test_fraction > 0.0 && exp.test_fraction < 1.0) {
        return Err(violation("split.test_fraction", "must lie in (0, 1)"));
    }
    if exp.cv_folds < 2 {
        return Err(violation("split.cv_folds", "must be at least 2"));
    }
    if !(0.0..1.0).contains(&exp.vae_val_fraction) {
        return Err(violation("split.vae_val_fraction", "must lie in [0, 1)"));
    }
    exp.vae.validate().map_err(|e| violation("vae", e.to_string()))?;
    exp.rf.validate().map_err(|e| violation("rf", e.to_string()))?;
    for mf in &exp.grid.max_features {
        mf.validate().map_err(|e| violation("grid.max_features", e.to_string()))?;
    }

    Ok(RunConfig {
        data,
        seed,
        experiment: exp,
        out_dir,
    })
}

/// File values, then `--set` assignments, then the dedicated flags.
pub fn load(
    file: Option<&Path>,
    sets: &[String],
    seed: Option<u64>,
    out_dir: Option<&Path>,
) -> Result<RunConfig, ConfigError> {
    let mut map = match file {
        Some(p) => read_config_file(p)?,
        None => BTreeMap::new(),
    };
    for s in sets {
        let (k, v) = parse_assignment(s)?;
        map.insert(k, v);
    }
    if let Some(s) = seed {
        map.insert("seed".into(), s.to_string());
    }
    if let Some(d) = out_dir {
        map.insert("out_dir".into(), d.display().to_string());
    }
    resolve(&map)
}
