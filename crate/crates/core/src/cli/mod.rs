//! Command-line entry point: config resolution, subcommand dispatch and exit codes.

mod config;

pub use config::{
    load, parse_assignment, parse_flat, read_config_file, resolve, ConfigError, DataSource, RunConfig,
    DEFAULT_OUT_DIR,
};

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use crate::dataset::{
    align_cohort, holdout_split, load_clinical_table, load_feature_table, synth_cohort, write_clinical_csv,
    write_feature_csv, ClinicalTable, Cohort, DatasetError, MgmtStatus, Modality, Preprocessor,
};
use crate::eval::{emit_artifacts, load_report, run_experiment, to_json_17, vae_validation_split, EvalError, ExperimentError, Seeds};
use crate::forest::{grid_search_cv, ForestError, RfConfig};
use crate::mvvae::{train, Checkpoint, VaeConfig, VaeError};
use crate::nn::{Matrix, NnError};

#[derive(Debug, Parser)]
#[command(name = "mvlatent", version, about = "Multi-view VAE latent fusion versus radiomics random forests")]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort and write it as CSV tables.
    Synth,
    /// Full five-model experiment with artifacts.
    Run,
    /// Train the multi-view VAE on the training partition and save a checkpoint.
    TrainVae,
    /// Embed every subject with a saved checkpoint.
    Embed {
        /// Defaults to `<out-dir>/vae_checkpoint.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Cross-validated grid search on one feature set of the training partition.
    GridSearch {
        #[arg(long, value_enum, default_value_t = FeatureSet::Concat)]
        features: FeatureSet,
    },
    /// Re-render artifacts from an existing metrics.json.
    Report {
        /// Defaults to `<out-dir>/metrics.json`.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureSet {
    T1gd,
    Flair,
    Concat,
}

impl FeatureSet {
    fn name(self) -> &'static str {
        match self {
            FeatureSet::T1gd => "t1gd",
            FeatureSet::Flair => "flair",
            FeatureSet::Concat => "concat",
        }
    }
}

/// A failure with its process exit code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Numeric(n) => n.into(),
            DatasetError::Io { .. } => CliError::Other(e.to_string()),
            DatasetError::InvalidFoldCount(_) | DatasetError::InvalidFraction(_) | DatasetError::InvalidSynthParams(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<VaeError> for CliError {
    fn from(e: VaeError) -> Self {
        match e {
            VaeError::Numeric(_) | VaeError::NonFiniteLoss => CliError::Numeric(e.to_string()),
            VaeError::InvalidConfig(_) => CliError::Config(e.to_string()),
            VaeError::EmptyTrainingSet | VaeError::EmptyBatch => CliError::Data(e.to_string()),
            VaeError::Checkpoint(_) | VaeError::Io(_) => CliError::Other(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::NonFiniteScore => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ForestError> for CliError {
    fn from(e: ForestError) -> Self {
        match e {
            ForestError::Split(d) => d.into(),
            ForestError::Metric(m) => m.into(),
            ForestError::InvalidConfig(_) => CliError::Config(e.to_string()),
            ForestError::SingleClassTraining | ForestError::InvalidLabel => CliError::Data(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Data(d) => d.into(),
            ExperimentError::Vae(v) => v.into(),
            ExperimentError::Forest(f) => f.into(),
            ExperimentError::Metric(m) => m.into(),
            ExperimentError::InsufficientData(_) => CliError::Data(e.to_string()),
            ExperimentError::Io(_) => CliError::Other(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Other(format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// The cohort plus the generator's true log-odds when synthetic.
pub struct LoadedData {
    pub cohort: Cohort,
    pub oracle_logits: Option<Vec<f64>>,
}

pub fn load_data(cfg: &RunConfig) -> Result<LoadedData, CliError> {
    match &cfg.data {
        DataSource::Synth(p) => {
            let s = synth_cohort(p)?;
            info!("synthetic cohort: {} subjects, {} features per view", s.cohort.n(), p.d);
            Ok(LoadedData {
                cohort: s.cohort,
                oracle_logits: Some(s.logits),
            })
        }
        DataSource::Files { t1gd, flair, clinical } => {
            let t = load_feature_table(t1gd, Modality::T1Gd)?;
            let f = load_feature_table(flair, Modality::Flair)?;
            let c = load_clinical_table(clinical)?;
            let cohort = align_cohort(&t, &f, &c)?;
            info!(
                "loaded cohort: {} aligned subjects ({} t1gd rows, {} flair rows, {} clinical rows)",
                cohort.n(),
                t.n_subjects(),
                f.n_subjects(),
                c.subject_ids.len()
            );
            Ok(LoadedData {
                cohort,
                oracle_logits: None,
            })
        }
    }
}

fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    let DataSource::Synth(p) = &cfg.data else {
        return Err(CliError::Config("`synth` needs synthetic parameters, not data paths".into()));
    };
    let s = synth_cohort(p)?;
    let c = &s.cohort;
    write_feature_csv(&cfg.out_dir.join("t1gd.csv"), &c.subject_ids, &c.t1gd.feature_names, &c.t1gd.values)?;
    write_feature_csv(&cfg.out_dir.join("flair.csv"), &c.subject_ids, &c.flair.feature_names, &c.flair.values)?;
    let clinical = ClinicalTable {
        subject_ids: c.subject_ids.clone(),
        mgmt: c
            .y
            .iter()
            .map(|&l| if l == 1 { MgmtStatus::Methylated } else { MgmtStatus::Unmethylated })
            .collect(),
    };
    write_clinical_csv(&cfg.out_dir.join("clinical.csv"), &clinical)?;

    #[derive(Serialize)]
    struct Truth<'a> {
        params: &'a crate::dataset::SynthParams,
        direction: &'a [f64],
        subject_ids: &'a [String],
        logits: &'a [f64],
    }
    let truth = Truth {
        params: p,
        direction: &s.direction,
        subject_ids: &c.subject_ids,
        logits: &s.logits,
    };
    write_text(&cfg.out_dir.join("synth_truth.json"), &to_json_17(&truth)?)?;
    info!("wrote {} subjects to {}", c.n(), cfg.out_dir.display());
    Ok(())
}

fn cmd_run(cfg: &RunConfig) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let out = run_experiment(&data.cohort, &cfg.experiment, data.oracle_logits.as_deref())?;
    let written = emit_artifacts(&out.report, &cfg.out_dir)?;
    for (name, grid) in &out.fitted.grids {
        grid.save_cv_table(&cfg.out_dir.join(format!("cv_{name}.csv")))?;
    }
    for m in &out.report.models {
        info!("result {}: auc {:.4}", m.name, m.auc);
    }
    if let Some(b) = out.report.bayes_oracle_auc {
        info!("result bayes-oracle: auc {b:.4}");
    }
    info!("wrote {} artifacts to {}", written.len() + out.fitted.grids.len(), cfg.out_dir.display());
    Ok(())
}

/// Holdout split and train-only preprocessing, as `run` does it.
fn prepare(cfg: &RunConfig, cohort: &Cohort) -> Result<(Vec<usize>, Preprocessor, Cohort), CliError> {
    let seeds = Seeds::derive(cfg.seed);
    let split = holdout_split(&cohort.y, cfg.experiment.test_fraction, seeds.split)?;
    let pre = Preprocessor::fit(cohort, &split.train)?;
    let prepared = pre.apply(cohort)?;
    Ok((split.train, pre, prepared))
}

fn cmd_train_vae(cfg: &RunConfig) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let (train_rows, pre, prepared) = prepare(cfg, &data.cohort)?;
    let seeds = Seeds::derive(cfg.seed);
    let (fit, val) = vae_validation_split(&data.cohort.y, &train_rows, cfg.experiment.vae_val_fraction, seeds.vae_validation);
    let vae_cfg = VaeConfig {
        input_dims: [prepared.t1gd.n_features(), prepared.flair.n_features()],
        seed: seeds.vae,
        ..cfg.experiment.vae.clone()
    };
    let t = Instant::now();
    let (model, history) = train([&prepared.t1gd.values, &prepared.flair.values], &fit, &val, &vae_cfg)?;
    info!(
        "stage train-vae done in {:.2}s: {} epochs, best epoch {}, loss {:.4} -> {:.4}",
        t.elapsed().as_secs_f64(),
        history.epochs.len(),
        history.best_epoch,
        history.initial_loss,
        history.final_loss
    );
    Checkpoint::from_model(&model, Some(pre)).save(&cfg.out_dir.join("vae_checkpoint.json"))?;
    write_text(&cfg.out_dir.join("vae_history.json"), &to_json_17(&history)?)?;
    Ok(())
}

fn cmd_embed(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let default = cfg.out_dir.join("vae_checkpoint.json");
    let path = checkpoint.unwrap_or(&default);
    if !path.exists() {
        return Err(CliError::Config(format!("checkpoint not found: {}", path.display())));
    }
    let ck = Checkpoint::load(path)?;
    let model = ck.to_model()?;
    let pre = ck
        .preprocessing
        .as_ref()
        .ok_or_else(|| CliError::Config("checkpoint carries no preprocessing".into()))?;
    let data = load_data(cfg)?;
    let prepared = pre.apply(&data.cohort)?;
    let z = model.embed(&prepared.t1gd.values, &prepared.flair.values)?;
    write_embeddings(&cfg.out_dir.join("embeddings.csv"), &prepared, &z)?;
    info!("embedded {} subjects into {} dimensions", z.rows(), z.cols());
    Ok(())
}

fn write_embeddings(path: &Path, cohort: &Cohort, z: &Matrix) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    let mut header = vec!["subject_id".to_string()];
    header.extend((0..z.cols()).map(|j| format!("z{j}")));
    header.push("label".into());
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for i in 0..z.rows() {
        let mut rec = vec![cohort.subject_ids[i].clone()];
        rec.extend(z.row(i).iter().map(f64::to_string));
        rec.push(cohort.y[i].to_string());
        w.write_record(&rec).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn cmd_grid_search(cfg: &RunConfig, features: FeatureSet) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let (train_rows, _, prepared) = prepare(cfg, &data.cohort)?;
    let seeds = Seeds::derive(cfg.seed);
    let x = match features {
        FeatureSet::T1gd => prepared.t1gd.values.clone(),
        FeatureSet::Flair => prepared.flair.values.clone(),
        FeatureSet::Concat => prepared.concatenated(),
    }
    .select_rows(&train_rows);
    let y: Vec<u8> = train_rows.iter().map(|&i| data.cohort.y[i]).collect();
    let base = RfConfig {
        seed: seeds.forest,
        ..cfg.experiment.rf.clone()
    };
    let t = Instant::now();
    let res = grid_search_cv(&x, &y, &cfg.experiment.grid, &base, cfg.experiment.cv_folds, seeds.cv)?;
    info!(
        "stage grid-search done in {:.2}s: {} fits, best config {} mean auc {:.4}",
        t.elapsed().as_secs_f64(),
        res.n_fits(),
        res.best_index,
        res.best_mean_auc()
    );
    res.save_cv_table(&cfg.out_dir.join(format!("cv_{}.csv", features.name())))?;

    #[derive(Serialize)]
    struct Best<'a> {
        features: &'static str,
        config_id: usize,
        mean_auc: f64,
        config: &'a RfConfig,
    }
    let best = Best {
        features: features.name(),
        config_id: res.best_index,
        mean_auc: res.best_mean_auc(),
        config: res.best(),
    };
    write_text(&cfg.out_dir.join(format!("grid_best_{}.json", features.name())), &to_json_17(&best)?)
}

fn cmd_report(out_dir: &Path, metrics: Option<&Path>) -> Result<(), CliError> {
    let default = out_dir.join("metrics.json");
    let path = metrics.unwrap_or(&default);
    if !path.exists() {
        return Err(CliError::Config(format!("metrics file not found: {}", path.display())));
    }
    let report = load_report(path).map_err(|e| CliError::Config(e.to_string()))?;
    let written = emit_artifacts(&report, out_dir)?;
    info!("re-rendered {} artifacts in {}", written.len(), out_dir.display());
    Ok(())
}

/// Runs one parsed command line.
pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let is_report = matches!(cli.command, Command::Report { .. });
    // `report` needs no seed or data source, only the output directory.
    let seed = if is_report { Some(cli.seed.unwrap_or(0)) } else { cli.seed };
    let cfg = load(cli.config.as_deref(), &cli.set, seed, cli.out_dir.as_deref())?;
    if !is_report {
        ensure_dir(&cfg.out_dir)?;
    }
    let result = match &cli.command {
        Command::Synth => cmd_synth(&cfg),
        Command::Run => cmd_run(&cfg),
        Command::TrainVae => cmd_train_vae(&cfg),
        Command::Embed { checkpoint } => cmd_embed(&cfg, checkpoint.as_deref()),
        Command::GridSearch { features } => cmd_grid_search(&cfg, *features),
        Command::Report { metrics } => cmd_report(&cfg.out_dir, metrics.as_deref()),
    };
    if result.is_ok() {
        info!("stage total done in {:.2}s", started.elapsed().as_secs_f64());
    }
    result
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
