//! The five-model comparison on one seeded holdout split.

use std::collections::BTreeMap;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use super::metrics::{auc, roc_curve, RocResult};
use super::project::project_2d;
use super::ExperimentError;
use crate::dataset::{class_counts, holdout_split, Cohort, Preprocessor};
use crate::forest::{fit_forest, grid_search_cv, ForestModel, GridSearchResult, HyperGrid, RfConfig};
use crate::mvvae::{train, MvVaeModel, TrainEvent, TrainHistory, VaeConfig};
use crate::nn::{mix_seed, Matrix, Rng};

pub const MODEL_NAMES: [&str; 5] = [
    "unimodal-T1Gd",
    "unimodal-FLAIR",
    "early-fusion-default",
    "early-fusion-tuned",
    "mvvae-latent",
];

pub const METRICS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub test_fraction: f64,
    pub cv_folds: usize,
    /// Share of the training rows held out for VAE early stopping.
    pub vae_val_fraction: f64,
    /// `input_dims` and `seed` are filled in from the data and `seed`.
    pub vae: VaeConfig,
    /// Baseline forest; its `seed` is replaced by a derived one.
    pub rf: RfConfig,
    pub grid: HyperGrid,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            test_fraction: 0.25,
            cv_folds: 5,
            vae_val_fraction: 0.2,
            vae: VaeConfig::default(),
            rf: RfConfig::default(),
            grid: HyperGrid::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub split: u64,
    pub cv: u64,
    pub forest: u64,
    pub vae: u64,
    pub vae_validation: u64,
    pub projection: u64,
}

impl Seeds {
    pub fn derive(master: u64) -> Self {
        Seeds {
            master,
            split: mix_seed(master, 1),
            cv: mix_seed(master, 2),
            forest: mix_seed(master, 3),
            vae: mix_seed(master, 4),
            vae_validation: mix_seed(master, 5),
            projection: mix_seed(master, 6),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub protocol: String,
    pub test_fraction: f64,
    pub n_subjects: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub train_class_counts: [usize; 2],
    pub test_class_counts: [usize; 2],
    pub vae_train_rows: usize,
    pub vae_validation_rows: usize,
    pub test_subjects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: usize,
    pub n_configs: usize,
    pub n_fits: usize,
    pub best_config_id: usize,
    pub best_mean_auc: f64,
    pub table: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub name: String,
    pub features: String,
    pub n_features: usize,
    pub auc: f64,
    pub roc: RocResult,
    pub hyperparameters: RfConfig,
    pub cv: Option<CvSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub early_stop_epoch: Option<usize>,
    pub lr_reductions: usize,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub best_validation_loss: f64,
}

impl VaeSummary {
    pub fn from_history(h: &TrainHistory) -> Self {
        VaeSummary {
            epochs_run: h.epochs.len(),
            best_epoch: h.best_epoch,
            early_stop_epoch: h.early_stop_epoch(),
            lr_reductions: h.events.iter().filter(|e| matches!(e, TrainEvent::LrReduced { .. })).count(),
            initial_train_loss: h.initial_loss,
            final_train_loss: h.final_loss,
            best_validation_loss: h.epochs.last().map_or(f64::NAN, |e| e.best_val_loss),
        }
    }
}

/// Test-row latent coordinates for the scatter plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionData {
    pub model: String,
    pub method: String,
    pub variances: [f64; 2],
    pub points: Vec<[f64; 2]>,
    pub probability: Vec<f64>,
    pub label: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub mvlatent: String,
    pub metrics_format: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            mvlatent: env!("CARGO_PKG_VERSION").to_string(),
            metrics_format: METRICS_FORMAT_VERSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub models: Vec<ModelResult>,
    pub seeds: Seeds,
    pub split: SplitInfo,
    pub config: ExperimentConfig,
    pub versions: Versions,
    pub vae: VaeSummary,
    /// AUC of the generator's true log-odds on the test rows (synthetic data only).
    pub bayes_oracle_auc: Option<f64>,
    pub projection: ProjectionData,
    /// Wall-clock seconds per stage; the only run-to-run varying content.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<BTreeMap<String, f64>>,
}

impl Report {
    pub fn model(&self, name: &str) -> Option<&ModelResult> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn aucs(&self) -> Vec<(String, f64)> {
        self.models.iter().map(|m| (m.name.clone(), m.auc)).collect()
    }
}

/// Everything fitted on the training rows.
#[derive(Debug, Clone)]
pub struct FittedModels {
    pub preprocessor: Preprocessor,
    pub vae: MvVaeModel,
    pub vae_history: TrainHistory,
    /// In `MODEL_NAMES` order.
    pub forests: Vec<ForestModel>,
    pub grids: Vec<(String, GridSearchResult)>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: Report,
    pub fitted: FittedModels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Input {
    T1gd,
    Flair,
    Concat,
    Latent,
}

const INPUTS: [Input; 5] = [Input::T1gd, Input::Flair, Input::Concat, Input::Concat, Input::Latent];

fn features(cohort: &Cohort, embedding: Option<&Matrix>, input: Input) -> Matrix {
    match input {
        Input::T1gd => cohort.t1gd.values.clone(),
        Input::Flair => cohort.flair.values.clone(),
        Input::Concat => cohort.concatenated(),
        Input::Latent => embedding.expect("embedding computed before latent model").clone(),
    }
}

fn describe(input: Input, d: usize) -> String {
    match input {
        Input::T1gd => format!("t1gd radiomics ({d})"),
        Input::Flair => format!("flair radiomics ({d})"),
        Input::Concat => format!("concatenated t1gd+flair radiomics ({d})"),
        Input::Latent => format!("concatenated latent means ({d})"),
    }
}

/// Seeded validation carve-out from the training rows, stratified by label.
pub fn vae_validation_split(y: &[u8], train: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    if fraction <= 0.0 || train.len() < 2 {
        return (train.to_vec(), Vec::new());
    }
    let mut rng = Rng::seed_from(seed);
    let mut fit = Vec::new();
    let mut val = Vec::new();
    for class in 0..2u8 {
        let mut rows: Vec<usize> = train.iter().copied().filter(|&r| y[r] == class).collect();
        rng.shuffle(&mut rows);
        let k = ((rows.len() as f64 * fraction).round() as usize).min(rows.len().saturating_sub(1));
        val.extend_from_slice(&rows[..k]);
        fit.extend_from_slice(&rows[k..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    (fit, val)
}

fn timed<T>(timing: &mut BTreeMap<String, f64>, stage: &str, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    let secs = t.elapsed().as_secs_f64();
    info!("stage {stage} done in {secs:.2}s");
    timing.insert(stage.to_string(), secs);
    out
}

/// Fits the preprocessing, VAE and all five forests on `train` rows of the raw cohort.
pub fn fit_models(
    cohort: &Cohort,
    train: &[usize],
    cfg: &ExperimentConfig,
    timing: &mut BTreeMap<String, f64>,
) -> Result<(FittedModels, Cohort), ExperimentError> {
    let seeds = Seeds::derive(cfg.seed);
    let y_train: Vec<u8> = train.iter().map(|&i| cohort.y[i]).collect();
    let preprocessor = timed(timing, "preprocess", || Preprocessor::fit(cohort, train))?;
    let prepared = preprocessor.apply(cohort)?;

    let vae_cfg = VaeConfig {
        input_dims: [prepared.t1gd.n_features(), prepared.flair.n_features()],
        seed: seeds.vae,
        ..cfg.vae.clone()
    };
    let (vae_fit, vae_val) = vae_validation_split(&cohort.y, train, cfg.vae_val_fraction, seeds.vae_validation);
    let views = [&prepared.t1gd.values, &prepared.flair.values];
    let (vae, vae_history) = timed(timing, "vae", || train_vae(views, &vae_fit, &vae_val, &vae_cfg))?;
    info!(
        "vae: {} epochs, best epoch {}, train loss {:.4} -> {:.4}",
        vae_history.epochs.len(),
        vae_history.best_epoch,
        vae_history.initial_loss,
        vae_history.final_loss
    );
    let embedding = vae.embed(&prepared.t1gd.values, &prepared.flair.values)?;

    let rf = RfConfig {
        seed: seeds.forest,
        ..cfg.rf.clone()
    };
    let mut forests = Vec::new();
    let mut grids = Vec::new();
    for (name, input) in MODEL_NAMES.iter().zip(INPUTS) {
        let x = features(&prepared, Some(&embedding), input).select_rows(train);
        let tuned = name.ends_with("tuned") || input == Input::Latent;
        let config = if tuned {
            let res = timed(timing, &format!("grid-{name}"), || {
                grid_search_cv(&x, &y_train, &cfg.grid, &rf, cfg.cv_folds, seeds.cv)
            })?;
            info!(
                "{name}: best config {} of {}, mean cv auc {:.4}",
                res.best_index,
                res.configs.len(),
                res.best_mean_auc()
            );
            let best = res.best().clone();
            grids.push((name.to_string(), res));
            best
        } else {
            rf.clone()
        };
        let forest = timed(timing, &format!("fit-{name}"), || fit_forest(&x, &y_train, &config))?;
        forests.push(forest);
    }
    Ok((
        FittedModels {
            preprocessor,
            vae,
            vae_history,
            forests,
            grids,
        },
        prepared,
    ))
}

fn train_vae(
    views: [&Matrix; 2],
    fit_rows: &[usize],
    val_rows: &[usize],
    cfg: &VaeConfig,
) -> Result<(MvVaeModel, TrainHistory), ExperimentError> {
    Ok(train(views, fit_rows, val_rows, cfg)?)
}

/// Class-1 probabilities of every model on `rows` of the preprocessed cohort.
pub fn score_models(fitted: &FittedModels, prepared: &Cohort, rows: &[usize]) -> Result<Vec<Vec<f64>>, ExperimentError> {
    let sub = prepared.select_rows(rows);
    let embedding = fitted.vae.embed(&sub.t1gd.values, &sub.flair.values)?;
    INPUTS
        .iter()
        .zip(&fitted.forests)
        .map(|(&input, forest)| Ok(forest.predict_proba(&features(&sub, Some(&embedding), input))?))
        .collect()
}

fn require_classes(y: &[u8], what: &str) -> Result<(), ExperimentError> {
    let c = class_counts(y);
    if c[0] == 0 || c[1] == 0 {
        return Err(ExperimentError::InsufficientData(format!(
            "{what} partition lacks a class (counts {c:?})"
        )));
    }
    Ok(())
}

/// One seeded holdout split, five models trained on its training rows and scored on
/// the identical test rows. `oracle_logits` (synthetic data) adds a Bayes reference.
pub fn run_experiment(
    cohort: &Cohort,
    cfg: &ExperimentConfig,
    oracle_logits: Option<&[f64]>,
) -> Result<ExperimentOutput, ExperimentError> {
    let started = Instant::now();
    let seeds = Seeds::derive(cfg.seed);
    require_classes(&cohort.y, "cohort")?;
    let split = holdout_split(&cohort.y, cfg.test_fraction, seeds.split)?;
    let y_train: Vec<u8> = split.train.iter().map(|&i| cohort.y[i]).collect();
    let y_test: Vec<u8> = split.test.iter().map(|&i| cohort.y[i]).collect();
    require_classes(&y_train, "training")?;
    require_classes(&y_test, "test")?;
    info!(
        "split: {} train / {} test subjects ({} features per view)",
        split.train.len(),
        split.test.len(),
        cohort.t1gd.n_features()
    );

    let mut timing = BTreeMap::new();
    let (fitted, prepared) = fit_models(cohort, &split.train, cfg, &mut timing)?;
    let scores = score_models(&fitted, &prepared, &split.test)?;

    let mut models = Vec::new();
    for (i, name) in MODEL_NAMES.iter().enumerate() {
        let roc = roc_curve(&scores[i], &y_test)?;
        info!("{name}: test auc {:.4}", roc.auc);
        let forest = &fitted.forests[i];
        let cv = fitted.grids.iter().find(|(n, _)| n == name).map(|(n, g)| CvSummary {
            folds: cfg.cv_folds,
            n_configs: g.configs.len(),
            n_fits: g.n_fits(),
            best_config_id: g.best_index,
            best_mean_auc: g.best_mean_auc(),
            table: format!("cv_{n}.csv"),
        });
        models.push(ModelResult {
            name: name.to_string(),
            features: describe(INPUTS[i], forest.n_features),
            n_features: forest.n_features,
            auc: roc.auc,
            roc,
            hyperparameters: forest.config.clone(),
            cv,
        });
    }

    let test_cohort = prepared.select_rows(&split.test);
    let test_embedding = fitted.vae.embed(&test_cohort.t1gd.values, &test_cohort.flair.values)?;
    let proj = project_2d(&test_embedding, seeds.projection)?;
    let projection = ProjectionData {
        model: MODEL_NAMES[4].to_string(),
        method: "pca".to_string(),
        variances: proj.variances,
        points: (0..proj.coords.rows()).map(|i| [proj.coords.get(i, 0), proj.coords.get(i, 1)]).collect(),
        probability: scores[4].clone(),
        label: y_test.clone(),
    };

    let bayes_oracle_auc = oracle_logits
        .map(|l| {
            let s: Vec<f64> = split.test.iter().map(|&i| l[i]).collect();
            auc(&s, &y_test)
        })
        .transpose()?;
    let (vae_fit, vae_val) = vae_validation_split(&cohort.y, &split.train, cfg.vae_val_fraction, seeds.vae_validation);
    timing.insert("total".to_string(), started.elapsed().as_secs_f64());

    let report = Report {
        models,
        seeds,
        split: SplitInfo {
            protocol: "stratified holdout".to_string(),
            test_fraction: cfg.test_fraction,
            n_subjects: cohort.n(),
            n_train: split.train.len(),
            n_test: split.test.len(),
            train_class_counts: class_counts(&y_train),
            test_class_counts: class_counts(&y_test),
            vae_train_rows: vae_fit.len(),
            vae_validation_rows: vae_val.len(),
            test_subjects: split.test.iter().map(|&i| cohort.subject_ids[i].clone()).collect(),
        },
        config: ExperimentConfig {
            vae: fitted.vae.config.clone(),
            rf: RfConfig {
                seed: seeds.forest,
                ..cfg.rf.clone()
            },
            ..cfg.clone()
        },
        versions: Versions::default(),
        vae: VaeSummary::from_history(&fitted.vae_history),
        bayes_oracle_auc,
        projection,
        timing: Some(timing),
    };
    Ok(ExperimentOutput { report, fitted })
}
