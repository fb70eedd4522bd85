//! Initialization, Adam, and the mini-batch training loop with early
//! stopping on a validation set.

use std::borrow::Borrow;
use std::io::{BufRead, Write};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::NormProfile;
use crate::error::{Error, Result};
use crate::frame::MovingFrame;
use crate::metrics::Metrics;
use crate::model::{AttentionTrace, Ddn, DdnConfig, DdnParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without an improvement larger than `min_delta` before stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    pub early_stopping: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 300,
            batch_size: 32,
            patience: 10,
            min_delta: 1e-6,
            seed: 0,
            early_stopping: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("beta1 and beta2 must lie in [0, 1)".into()));
        }
        if !(self.epsilon >= 0.0) || !(self.min_delta >= 0.0) {
            return Err(Error::Config("epsilon and min_delta must be non-negative".into()));
        }
        if self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config("batch_size and patience must be >= 1".into()));
        }
        Ok(())
    }
}

/// Glorot-uniform weights in `±√(6 / (fan_in + fan_out))`, zero biases.
pub fn init_params(config: &DdnConfig, seed: u64) -> Result<DdnParams> {
    config.validate()?;
    let mut params = DdnParams::zeros(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in params.layers_mut() {
        let limit = (6.0 / (layer.inputs() + layer.outputs()) as f64).sqrt();
        for w in layer.weight.as_mut_slice() {
            *w = rng.random_range(-limit..=limit);
        }
    }
    Ok(params)
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: DdnParams,
    pub v: DdnParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: &DdnConfig) -> Self {
        AdamState {
            m: DdnParams::zeros(config),
            v: DdnParams::zeros(config),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of a flat buffer at step `t ≥ 1`:
/// `θ ← θ − lr · m̂ / (√v̂ + ε)`.
pub fn adam_update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], t: u64, config: &TrainConfig) {
    let TrainConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
        ..
    } = *config;
    let c1 = 1.0 - b1.powf(t as f64);
    let c2 = 1.0 - b2.powf(t as f64);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

pub fn adam_step(params: &mut DdnParams, grads: &DdnParams, state: &mut AdamState, config: &TrainConfig) -> Result<()> {
    let lens = |p: &DdnParams| p.buffers().iter().map(|b| b.len()).collect::<Vec<_>>();
    let want = lens(params);
    for (what, got) in [
        ("gradient", lens(grads)),
        ("first moment", lens(&state.m)),
        ("second moment", lens(&state.v)),
    ] {
        if got != want {
            return Err(Error::shape(
                "adam_step",
                format!("{what} buffers {got:?}"),
                format!("{want:?}"),
            ));
        }
    }
    state.step += 1;
    let t = state.step;
    let moments = state.m.buffers_mut().into_iter().zip(state.v.buffers_mut());
    for ((p, g), (m, v)) in params.buffers_mut().into_iter().zip(grads.buffers()).zip(moments) {
        adam_update(p, g, m, v, t, config);
    }
    Ok(())
}

/// The order in which an epoch visits `n` frames. Seeded by `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub stop_reason: StopReason,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine {
    Epoch(EpochRecord),
    Summary {
        best_epoch: Option<usize>,
        stop_reason: StopReason,
    },
}

impl TrainingLog {
    /// Same log with wall-clock times zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> TrainingLog {
        let mut log = self.clone();
        log.epochs.iter_mut().for_each(|e| e.seconds = 0.0);
        log
    }

    /// One JSON object per line: every epoch, then a summary line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.epochs {
            serde_json::to_writer(&mut out, &LogLine::Epoch(e.clone()))?;
            out.write_all(b"\n")?;
        }
        serde_json::to_writer(
            &mut out,
            &LogLine::Summary {
                best_epoch: self.best_epoch,
                stop_reason: self.stop_reason,
            },
        )?;
        out.write_all(b"\n")?;
        out.flush()
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<TrainingLog> {
        let mut epochs = Vec::new();
        let mut summary = None;
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Data(format!("training log: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine =
                serde_json::from_str(&line).map_err(|e| Error::Data(format!("training log line {}: {e}", i + 1)))?;
            match parsed {
                LogLine::Epoch(e) => epochs.push(e),
                LogLine::Summary {
                    best_epoch,
                    stop_reason,
                } => summary = Some((best_epoch, stop_reason)),
            }
        }
        let (best_epoch, stop_reason) =
            summary.ok_or_else(|| Error::Data("training log has no summary line".into()))?;
        Ok(TrainingLog {
            epochs,
            best_epoch,
            stop_reason,
        })
    }
}

/// Trains from Glorot initialization seeded by `train_config.seed`.
pub fn train(
    train_frames: &[MovingFrame],
    val_frames: &[MovingFrame],
    ddn_config: &DdnConfig,
    train_config: &TrainConfig,
) -> Result<(Ddn, TrainingLog)> {
    let params = init_params(ddn_config, train_config.seed)?;
    let model = Ddn::new(ddn_config.clone(), params)?;
    train_from(model, train_frames, val_frames, train_config)
}

/// Mini-batch Adam over shuffled frames.
///
/// With early stopping, returns the parameters of the epoch with the lowest
/// validation loss; patience only resets on improvements above `min_delta`.
/// Without it, returns the final parameters.
pub fn train_from(
    mut model: Ddn,
    train_frames: &[MovingFrame],
    val_frames: &[MovingFrame],
    cfg: &TrainConfig,
) -> Result<(Ddn, TrainingLog)> {
    cfg.validate()?;
    if train_frames.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if cfg.early_stopping && val_frames.is_empty() {
        return Err(Error::Config("early stopping needs a non-empty validation set".into()));
    }

    let mut state = AdamState::new(&model.config);
    let mut log = TrainingLog {
        epochs: Vec::new(),
        best_epoch: None,
        stop_reason: StopReason::MaxEpochs,
    };
    let mut best: Option<(f64, DdnParams)> = None;
    let mut best_for_patience = f64::INFINITY;
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let order = epoch_order(train_frames.len(), cfg.seed, epoch);
        let mut loss_sum = 0.0;
        for (batch, ids) in order.chunks(cfg.batch_size).enumerate() {
            let frames: Vec<&MovingFrame> = ids.iter().map(|&i| &train_frames[i]).collect();
            let (loss, grads) = model.loss_and_grad(&frames)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFinite {
                    stage: "training",
                    epoch,
                    batch,
                });
            }
            adam_step(&mut model.params, &grads, &mut state, cfg)?;
            loss_sum += loss * ids.len() as f64;
        }
        let train_loss = loss_sum / train_frames.len() as f64;

        let val_loss = if val_frames.is_empty() {
            None
        } else {
            let v = model.batch_loss(val_frames)?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    stage: "validation",
                    epoch,
                    batch: 0,
                });
            }
            Some(v)
        };
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds: started.elapsed().as_secs_f64(),
        });
        log::debug!("epoch {epoch}: train {train_loss:.6e} val {val_loss:?}");

        if !cfg.early_stopping {
            log.best_epoch = Some(epoch);
            continue;
        }
        let v = val_loss.expect("validation set checked above");
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, model.params.clone()));
            log.best_epoch = Some(epoch);
        }
        if v < best_for_patience - cfg.min_delta {
            best_for_patience = v;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log.stop_reason = StopReason::EarlyStopping;
                break;
            }
        }
    }

    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok((model, log))
}

/// One row of per-cycle predictions in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub battery_id: String,
    pub cycle: usize,
    pub actual: f64,
    pub predicted: f64,
}

/// Prediction rows with the attention trace of each frame, keyed by battery id.
pub type Predicted = (Vec<PredictionRow>, Vec<(String, AttentionTrace)>);

/// Predictions for every frame, de-normalized with `profile`, plus the
/// attention traces when the model pools with attention.
pub fn predict_frames<F: Borrow<MovingFrame>>(model: &Ddn, frames: &[F], profile: &NormProfile) -> Result<Predicted> {
    let mut rows = Vec::with_capacity(frames.len());
    let mut traces = Vec::new();
    for f in frames {
        let f = f.borrow();
        let p = model.forward(f)?;
        if !p.value.is_finite() {
            return Err(Error::NonFinite {
                stage: "prediction",
                epoch: 0,
                batch: 0,
            });
        }
        rows.push(PredictionRow {
            battery_id: f.battery_id.to_string(),
            cycle: f.target_cycle,
            actual: profile.denormalize_capacity(f.target),
            predicted: profile.denormalize_capacity(p.value),
        });
        if let Some(t) = p.trace {
            traces.push((f.battery_id.to_string(), t));
        }
    }
    Ok((rows, traces))
}

/// RMSE, MAPE and R² in physical units (Ah, or SOH ratio in SOH mode).
pub fn evaluate<F: Borrow<MovingFrame>>(model: &Ddn, frames: &[F], profile: &NormProfile) -> Result<Metrics> {
    if frames.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let (rows, _) = predict_frames(model, frames, profile)?;
    let pred: Vec<f64> = rows.iter().map(|r| r.predicted).collect();
    let actual: Vec<f64> = rows.iter().map(|r| r.actual).collect();
    Metrics::compute(&pred, &actual)
}
