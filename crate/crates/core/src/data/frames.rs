use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{resample_linear, BatteryHistory, CycleRecord, NormProfile, Phase};
use crate::error::{Error, Result};
use crate::frame::{CycleFeatures, MovingFrame};
use crate::model::DdnConfig;

/// What the capacity feature and target carry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// Discharge capacity in Ah, then the profile's min-max.
    #[default]
    Capacity,
    /// Capacity divided by the battery's cycle-0 capacity, then the profile's min-max.
    Soh,
}

impl Target {
    fn raw(self, history: &BatteryHistory, cycle: usize) -> f64 {
        let q = history.cycles[cycle].capacity;
        match self {
            Target::Capacity => q,
            Target::Soh => q / history.cycles[0].capacity,
        }
    }
}

/// Normalized per-cycle inputs: `[capacity]`, charge curve, discharge curve.
pub fn cycle_features(
    cycle: &CycleRecord,
    raw_capacity: f64,
    config: &DdnConfig,
    profile: &NormProfile,
) -> Result<CycleFeatures> {
    check_feature_layout(config)?;
    let window = profile.window_seconds;
    let curve = |curve: &[(f64, f64)], phase: Phase, len: usize, label: &str| -> Result<Vec<f64>> {
        if let Some(&(end, _)) = curve.last() {
            if end < window {
                log::debug!(
                    "cycle {}: {label} curve ends at {end} s, holding last value to {window} s",
                    cycle.index
                );
            }
        }
        let sampled = resample_linear(curve, window, len)
            .map_err(|e| Error::Data(format!("cycle {} {label} curve: {e}", cycle.index)))?;
        Ok(profile.normalize_voltage(&sampled, phase))
    };
    Ok(CycleFeatures {
        cycle: cycle.index,
        features: vec![
            vec![profile.normalize_capacity(raw_capacity)],
            curve(&cycle.charge, Phase::Charge, config.feature_lens[1], "charge")?,
            curve(&cycle.discharge, Phase::Discharge, config.feature_lens[2], "discharge")?,
        ],
    })
}

fn check_feature_layout(config: &DdnConfig) -> Result<()> {
    if config.num_features() != 3 || config.feature_lens[0] != 1 {
        return Err(Error::Config(format!(
            "telemetry frames carry 3 features (capacity of length 1, charge, discharge); \
             config has lengths {:?}",
            config.feature_lens
        )));
    }
    Ok(())
}

/// Frames `t = 0 ..= C − N − 1` (from 1 when the reference is excluded from
/// history). Frame `t` holds cycles `t..t+N` and predicts cycle `t + N`.
pub fn build_frames(
    history: &BatteryHistory,
    config: &DdnConfig,
    profile: &NormProfile,
    target: Target,
) -> Result<Vec<MovingFrame>> {
    config.validate()?;
    check_feature_layout(config)?;
    let n = config.history;
    let first = usize::from(config.exclude_reference_from_history);
    let count = history.cycles.len();
    if count < first + n + 1 {
        return Err(Error::Data(format!(
            "battery {}: {count} cycles is too few for N = {n} (need at least {})",
            history.id,
            first + n + 1
        )));
    }

    let features: Vec<Arc<CycleFeatures>> = history.cycles[..count - 1]
        .iter()
        .enumerate()
        .map(|(i, c)| {
            cycle_features(c, target.raw(history, i), config, profile)
                .map(Arc::new)
                .map_err(|e| Error::Data(format!("battery {}: {e}", history.id)))
        })
        .collect::<Result<_>>()?;

    let out_of_band = features
        .iter()
        .flat_map(|c| c.features[1..].iter().flatten())
        .filter(|v| !(0.0..=1.05).contains(*v))
        .count();
    if out_of_band > 0 {
        log::warn!(
            "battery {}: {out_of_band} normalized voltage samples outside [0, 1.05] under profile {}",
            history.id,
            profile.name
        );
    }

    let id: Arc<str> = Arc::from(history.id.as_str());
    let frames: Vec<MovingFrame> = (first..count - n)
        .map(|t| MovingFrame {
            battery_id: Arc::clone(&id),
            start: t,
            target_cycle: t + n,
            reference: Arc::clone(&features[0]),
            history: features[t..t + n].to_vec(),
            target: profile.normalize_capacity(target.raw(history, t + n)),
        })
        .collect();

    let outside = frames.iter().filter(|f| !(-0.5..=1.5).contains(&f.target)).count();
    if outside > 0 {
        log::warn!(
            "battery {}: {outside} normalized targets outside [-0.5, 1.5]",
            history.id
        );
    }
    Ok(frames)
}

/// Frames of every battery, concatenated in fleet order.
pub fn build_fleet_frames(
    fleet: &[BatteryHistory],
    config: &DdnConfig,
    profile: &NormProfile,
    target: Target,
) -> Result<Vec<MovingFrame>> {
    let per_battery: Vec<Vec<MovingFrame>> = fleet
        .par_iter()
        .map(|h| build_frames(h, config, profile, target))
        .collect::<Result<_>>()?;
    Ok(per_battery.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn toy_history(cycles: usize) -> BatteryHistory {
        BatteryHistory {
            id: "toy".into(),
            cycles: (0..cycles)
                .map(|i| CycleRecord {
                    index: i,
                    charge: vec![(0.0, 3.0), (360.0, 3.5)],
                    discharge: vec![(0.0, 3.3), (360.0, 2.5 - 0.001 * i as f64)],
                    capacity: 1.1 - 0.002 * i as f64,
                })
                .collect(),
            metadata: BTreeMap::new(),
        }
    }

    fn config(n: usize) -> DdnConfig {
        let mut c = DdnConfig::standard(n);
        c.feature_lens = vec![1, 5, 5];
        c
    }

    #[test]
    fn frame_enumeration() {
        let frames = build_frames(&toy_history(10), &config(3), &NormProfile::mit(), Target::Capacity).unwrap();
        assert_eq!(frames.len(), 7);
        let targets: Vec<usize> = frames.iter().map(|f| f.target_cycle).collect();
        assert_eq!(targets, (3..10).collect::<Vec<_>>());
        for f in &frames {
            let idx: Vec<usize> = f.history.iter().map(|c| c.cycle).collect();
            assert_eq!(idx, (f.start..f.start + 3).collect::<Vec<_>>());
            assert_eq!(f.reference.cycle, 0);
            assert_eq!(f.reference, frames[0].reference);
        }
        let expected = NormProfile::mit().normalize_capacity(1.1 - 0.002 * 9.0);
        assert_eq!(frames[6].target, expected);
        // historical capacity feature is the normalized capacity of that cycle
        assert_eq!(
            frames[2].history[1].features[0][0],
            NormProfile::mit().normalize_capacity(1.1 - 0.006)
        );
    }

    #[test]
    fn boundary_and_too_few() {
        let frames = build_frames(&toy_history(4), &config(3), &NormProfile::mit(), Target::Capacity).unwrap();
        assert_eq!(frames.len(), 1);
        assert!(build_frames(&toy_history(3), &config(3), &NormProfile::mit(), Target::Capacity).is_err());
    }

    #[test]
    fn excluding_reference_starts_at_one() {
        let mut c = config(3);
        c.exclude_reference_from_history = true;
        let frames = build_frames(&toy_history(10), &c, &NormProfile::mit(), Target::Capacity).unwrap();
        assert_eq!(frames.len(), 6);
        assert_eq!(frames[0].start, 1);
        assert!(build_frames(&toy_history(4), &c, &NormProfile::mit(), Target::Capacity).is_err());
    }

    #[test]
    fn soh_targets() {
        let h = toy_history(6);
        let p = NormProfile::oxford();
        let frames = build_frames(&h, &config(3), &p, Target::Soh).unwrap();
        let soh = h.cycles[5].capacity / h.cycles[0].capacity;
        assert!((frames[2].target - (soh - 0.75) / 0.25).abs() < 1e-14);
        assert!((frames[0].reference.features[0][0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn wrong_feature_layout() {
        let mut c = config(3);
        c.feature_lens = vec![1, 5];
        c.embed_dims = vec![4, 4];
        assert!(build_frames(&toy_history(6), &c, &NormProfile::mit(), Target::Capacity).is_err());
    }
}
