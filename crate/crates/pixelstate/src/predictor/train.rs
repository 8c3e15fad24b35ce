//! Mini-batch training loop for the predictor.

use super::{PredictorArch, PredictorModel};
use crate::dataset::{fill_batch, Dataset, Split};
use crate::error::{Error, Result};
use crate::nn::{Adam, Params};
use crate::seed::sub_rng;
use ndarray::ArrayD;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: u32,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch_size: 32, epochs: 100, learning_rate: 1e-3, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config { detail: "batch_size must be ≥ 1".into() });
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config { detail: "learning_rate must be > 0".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Training progress restored from a checkpoint.
pub struct ResumeState {
    pub model: PredictorModel,
    pub start_epoch: u32,
    pub adam_t: u64,
    pub moments: Vec<(String, ArrayD<f64>, ArrayD<f64>)>,
}

pub struct TrainOutput {
    pub model: PredictorModel,
    pub history: Vec<EpochStats>,
    /// (epoch, val_loss) of the best validation epoch, if validation ran.
    pub best: Option<(u32, f64)>,
}

/// Train for `cfg.epochs` total epochs (resuming partway if given), calling
/// `on_epoch` after each epoch with the stats, current model and optimizer.
///
/// Deterministic: batch order is derived from (seed, epoch), so a resumed
/// run walks the same batches the uninterrupted run would have.
pub fn train(
    ds: &Dataset,
    split: &Split,
    arch: PredictorArch,
    cfg: &TrainConfig,
    resume: Option<ResumeState>,
    mut on_epoch: impl FnMut(&EpochStats, &PredictorModel, &Adam) -> Result<()>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(Error::Empty { what: "training split".into() });
    }
    if ds.is_empty() {
        return Err(Error::Empty { what: "dataset".into() });
    }

    let mut adam = Adam::new(cfg.learning_rate);
    let (mut model, start_epoch) = match resume {
        Some(state) => {
            if state.model.arch != arch {
                return Err(Error::ArchMismatch {
                    detail: "resume checkpoint architecture differs from requested".into(),
                });
            }
            if !state.moments.is_empty() {
                adam.import_state(state.adam_t, state.moments);
            }
            (state.model, state.start_epoch)
        }
        None => (PredictorModel::new(arch, cfg.seed), 0),
    };

    let mut history = Vec::new();
    let mut best: Option<(u32, f64)> = None;

    for epoch in start_epoch..cfg.epochs {
        let mut order: Vec<u32> = split.train.clone();
        let mut rng = sub_rng(cfg.seed, "epoch.shuffle", u64::from(epoch));
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut loss_sum = 0.0;
        for (batch_idx, ids) in order.chunks(cfg.batch_size).enumerate() {
            let (frames, actions, targets) = fill_batch(ds, ids);
            model.zero_grads();
            let (out, cache) = model.forward(&frames, &actions)?;
            let (loss, dout) = PredictorModel::mse_loss(&out, &targets);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    context: format!("epoch {epoch}, batch {batch_idx}"),
                });
            }
            model.backward(&cache, &dout);
            adam.step(&mut model);
            loss_sum += loss * ids.len() as f64;
        }
        let train_loss = loss_sum / split.train.len() as f64;

        let val_loss = if split.val.is_empty() {
            None
        } else {
            Some(evaluate_loss(&model, ds, &split.val, cfg.batch_size)?)
        };

        let stats = EpochStats { epoch, train_loss, val_loss };
        if let Some(v) = val_loss {
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss { context: format!("validation at epoch {epoch}") });
            }
            if best.map_or(true, |(_, b)| v < b) {
                best = Some((epoch, v));
            }
        }
        on_epoch(&stats, &model, &adam)?;
        history.push(stats);
    }
    Ok(TrainOutput { model, history, best })
}

/// Mean loss over a sample id list, forward only.
pub fn evaluate_loss(model: &PredictorModel, ds: &Dataset, ids: &[u32], batch_size: usize) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::Empty { what: "evaluation id list".into() });
    }
    let mut sum = 0.0;
    for chunk in ids.chunks(batch_size.max(1)) {
        let (frames, actions, targets) = fill_batch(ds, chunk);
        let (out, _) = model.forward(&frames, &actions)?;
        let (loss, _) = PredictorModel::mse_loss(&out, &targets);
        sum += loss * chunk.len() as f64;
    }
    Ok(sum / ids.len() as f64)
}
