use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::loss::{loss, loss_and_grad, LossComponents, Noise};
use super::model::{MvVaeModel, VaeConfig};
use super::VaeError;
use crate::nn::{adam_step, AdamConfig, AdamState, Matrix, NnError, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Size-weighted mean of the stochastic mini-batch losses seen during the epoch.
    pub train: LossComponents,
    pub lr: f64,
    pub val_loss: f64,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrainEvent {
    LrReduced { epoch: usize, lr: f64 },
    EarlyStop { epoch: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub events: Vec<TrainEvent>,
    /// Deterministic training-set loss (dropout off, `ε = 0`) before the first update.
    pub initial_loss: f64,
    /// Same evaluation on the restored best-validation parameters.
    pub final_loss: f64,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn early_stop_epoch(&self) -> Option<usize> {
        self.events.iter().find_map(|e| match e {
            TrainEvent::EarlyStop { epoch } => Some(*epoch),
            _ => None,
        })
    }
}

/// Deterministic evaluation: dropout off and posterior means decoded.
pub fn eval_loss(model: &MvVaeModel, views: [&Matrix; 2], rows: &[usize]) -> Result<LossComponents, VaeError> {
    let t1 = views[0].select_rows(rows);
    let fl = views[1].select_rows(rows);
    let mut rng = Rng::seed_from(0);
    loss(model, [&t1, &fl], Noise::Zero, false, &mut rng)
}

fn apply_update(
    model: &mut MvVaeModel,
    grads: &super::loss::ModelGrads,
    adam: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), NnError> {
    let grad_slices: Vec<&[f64]> = grads
        .0
        .iter()
        .flat_map(|g| [g.weights.data(), g.bias.as_slice()])
        .collect();
    let mut params: Vec<&mut [f64]> = model
        .layers_mut()
        .into_iter()
        .flat_map(|l| [l.weights.data_mut(), l.bias.as_mut_slice()])
        .collect();
    adam_step(&mut params, &grad_slices, adam, cfg)
}

/// Mini-batch Adam on the composite loss with early stopping and plateau LR reduction.
///
/// `views` holds the full T1Gd and FLAIR matrices; only `train_rows` drive updates and
/// `val_rows` (or the training rows, when empty) drive model selection. The returned
/// model carries the best-validation parameters.
pub fn train(
    views: [&Matrix; 2],
    train_rows: &[usize],
    val_rows: &[usize],
    config: &VaeConfig,
) -> Result<(MvVaeModel, TrainHistory), VaeError> {
    if train_rows.is_empty() {
        return Err(VaeError::EmptyTrainingSet);
    }
    let mut model = MvVaeModel::new(config.clone())?;
    let root = Rng::seed_from(config.seed);
    let mut shuffle_rng = root.fork(1);
    let mut noise_rng = root.fork(2);
    let val_rows = if val_rows.is_empty() { train_rows } else { val_rows };

    let sizes: Vec<usize> = model
        .layers()
        .iter()
        .flat_map(|l| [l.weights.data().len(), l.bias.len()])
        .collect();
    let mut adam = AdamState::new(&sizes);
    let mut adam_cfg = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let batch_size = config.batch_size.min(train_rows.len());

    let initial_loss = eval_loss(&model, views, train_rows)?.total;
    let mut best_val = f64::INFINITY;
    let mut best_params = model.flat_params();
    let mut best_epoch = 0;
    let mut stale = 0usize;
    let mut lr_stale = 0usize;
    let mut epochs = Vec::new();
    let mut events = Vec::new();
    let mut order = train_rows.to_vec();

    for epoch in 0..config.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut acc = LossComponents {
            total: 0.0,
            recon: [0.0; 2],
            kl: [0.0; 2],
            l2: 0.0,
        };
        for chunk in order.chunks(batch_size) {
            let t1 = views[0].select_rows(chunk);
            let fl = views[1].select_rows(chunk);
            let (c, grads) = loss_and_grad(&model, [&t1, &fl], Noise::Sample, true, &mut noise_rng)?;
            apply_update(&mut model, &grads, &mut adam, &adam_cfg)?;
            let w = chunk.len() as f64 / order.len() as f64;
            acc.total += w * c.total;
            for v in 0..2 {
                acc.recon[v] += w * c.recon[v];
                acc.kl[v] += w * c.kl[v];
            }
            acc.l2 += w * c.l2;
        }

        let val_loss = eval_loss(&model, views, val_rows)?.total;
        if val_loss < best_val - config.min_delta {
            best_val = val_loss;
            best_params = model.flat_params();
            best_epoch = epoch;
            stale = 0;
            lr_stale = 0;
        } else {
            stale += 1;
            lr_stale += 1;
        }
        epochs.push(EpochRecord {
            epoch,
            train: acc,
            lr: adam_cfg.lr,
            val_loss,
            best_val_loss: best_val,
        });
        debug!("vae epoch {epoch}: train {:.5} val {val_loss:.5} lr {:.2e}", acc.total, adam_cfg.lr);

        if stale >= config.patience {
            events.push(TrainEvent::EarlyStop { epoch });
            info!("vae early stop at epoch {epoch} (best epoch {best_epoch}, val {best_val:.5})");
            break;
        }
        if lr_stale >= config.lr_patience {
            let next = (adam_cfg.lr * config.lr_factor).max(config.lr_floor);
            if next < adam_cfg.lr {
                adam_cfg.lr = next;
                events.push(TrainEvent::LrReduced { epoch, lr: next });
                debug!("vae lr reduced to {next:.2e} at epoch {epoch}");
            }
            lr_stale = 0;
        }
    }

    model.set_flat_params(&best_params)?;
    let final_loss = eval_loss(&model, views, train_rows)?.total;
    Ok((
        model,
        TrainHistory {
            epochs,
            events,
            initial_loss,
            final_loss,
            best_epoch,
        },
    ))
}
