//! Attention-weight analysis and training-set-size study.

use rayon::prelude::*;

use crate::data::{build_fleet_frames, split_indices, BatteryHistory, NormProfile, SplitRatios, Target};
use crate::error::{Error, Result};
use crate::metrics::pearson;
use crate::model::{AttentionTrace, DdnConfig};
use crate::trainer::{evaluate, train, TrainConfig};

/// Attention weights of one battery's frames next to its capacity differences.
///
/// Frame `t` (predicting cycle `t + N`) is paired with `Q[t+N] − Q[t+N−1]`,
/// the most recent step of fade the frame is asked to extrapolate.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStudy {
    pub frame_starts: Vec<usize>,
    pub capacity_diffs: Vec<f64>,
    /// `slot_weights[s][i]` is α of slot `s` in frame `i`.
    pub slot_weights: Vec<Vec<f64>>,
    /// Pearson correlation of `|ΔQ|` with each slot; `None` when undefined.
    pub abs_correlation: Vec<Option<f64>>,
    /// Same against the signed difference.
    pub raw_correlation: Vec<Option<f64>>,
}

impl AttentionStudy {
    pub fn frames(&self) -> usize {
        self.frame_starts.len()
    }

    pub fn slots(&self) -> usize {
        self.slot_weights.len()
    }
}

pub fn attention_study(traces: &[AttentionTrace], capacities: &[f64]) -> Result<AttentionStudy> {
    if traces.len() < 3 {
        return Err(Error::Data(format!(
            "attention study needs at least 3 frames, got {}",
            traces.len()
        )));
    }
    let slots = traces[0].weights.len();
    let mut diffs = Vec::with_capacity(traces.len());
    let mut slot_weights = vec![Vec::with_capacity(traces.len()); slots];
    for t in traces {
        if t.weights.len() != slots {
            return Err(Error::shape("attention trace", slots, t.weights.len()));
        }
        let k = t.target_cycle;
        if k == 0 || k >= capacities.len() {
            return Err(Error::Data(format!(
                "trace for cycle {k} does not align with a history of {} cycles",
                capacities.len()
            )));
        }
        diffs.push(capacities[k] - capacities[k - 1]);
        for (s, &a) in t.weights.iter().enumerate() {
            slot_weights[s].push(a);
        }
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    Ok(AttentionStudy {
        frame_starts: traces.iter().map(|t| t.start).collect(),
        abs_correlation: slot_weights.iter().map(|w| pearson(&abs, w)).collect(),
        raw_correlation: slot_weights.iter().map(|w| pearson(&diffs, w)).collect(),
        capacity_diffs: diffs,
        slot_weights,
    })
}

/// One row of the size study.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeRow {
    pub train_batteries: Vec<String>,
    pub test_rmse: f64,
}

impl SizeRow {
    pub fn size(&self) -> usize {
        self.train_batteries.len()
    }
}

/// Inputs shared by every retraining of the size study.
#[derive(Debug, Clone)]
pub struct SizeStudySetup<'a> {
    pub ddn_config: &'a DdnConfig,
    pub train_config: &'a TrainConfig,
    pub profile: &'a NormProfile,
    pub target: Target,
    pub split_seed: u64,
    /// Non-test batteries held out for early stopping. Zero requires
    /// `train_config.early_stopping == false`.
    pub validation_batteries: usize,
}

/// The test batteries are those of the default split with `split_seed`.
/// The other batteries, in split order, form a pool; the last
/// `validation_batteries` of it validate and the first `k` train, for each
/// `k` in `sizes`. Every row retrains from the same seed, smaller training
/// sets are nested in larger ones, and validation and test are shared.
pub fn size_study(fleet: &[BatteryHistory], sizes: &[usize], setup: &SizeStudySetup) -> Result<Vec<SizeRow>> {
    let split = split_indices(fleet.len(), SplitRatios::default(), setup.split_seed)?;
    let mut pool: Vec<usize> = split.train.iter().chain(&split.val).copied().collect();
    if setup.validation_batteries >= pool.len() {
        return Err(Error::Config(format!(
            "{} validation batteries leave no training pool out of {}",
            setup.validation_batteries,
            pool.len()
        )));
    }
    let val_ids = pool.split_off(pool.len() - setup.validation_batteries);
    if sizes.is_empty() {
        return Err(Error::Config("size study needs at least one size".into()));
    }
    if let Some(&bad) = sizes.iter().find(|&&k| k == 0 || k > pool.len()) {
        return Err(Error::Config(format!(
            "training size {bad} outside 1..={} available training batteries",
            pool.len()
        )));
    }
    let pick = |ids: &[usize]| -> Vec<BatteryHistory> { ids.iter().map(|&i| fleet[i].clone()).collect() };
    let val = build_fleet_frames(&pick(&val_ids), setup.ddn_config, setup.profile, setup.target)?;
    let test = build_fleet_frames(&pick(&split.test), setup.ddn_config, setup.profile, setup.target)?;
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }

    sizes
        .par_iter()
        .map(|&k| {
            let subset = pick(&pool[..k]);
            let frames = build_fleet_frames(&subset, setup.ddn_config, setup.profile, setup.target)?;
            let (model, _) = train(&frames, &val, setup.ddn_config, setup.train_config)?;
            let metrics = evaluate(&model, &test, setup.profile)?;
            log::info!("size study: {k} batteries, test RMSE {:.6}", metrics.rmse);
            Ok(SizeRow {
                train_batteries: subset.into_iter().map(|b| b.id).collect(),
                test_rmse: metrics.rmse,
            })
        })
        .collect()
}
