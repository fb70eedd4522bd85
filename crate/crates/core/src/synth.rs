//! Synthetic battery fleets with controllable fade.
//!
//! Capacity follows `Q(c) = Q₀ · (1 − L(c) − b·cᵖ)` where `L` is linear in
//! the cycle index, optionally with a rate change mid-life. Terminal voltage
//! is an affine open-circuit curve shifted by the ohmic drop of a resistance
//! that grows linearly with cycling: `OCV(soc) − I·R(c)` on discharge and
//! `OCV(soc) + I·R(c)` on charge.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{BatteryHistory, CycleRecord};
use crate::error::{Error, Result};

/// Switch of the linear fade rate at a given cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadeChange {
    pub cycle: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Ah.
    pub initial_capacity: f64,
    /// Fraction of Q₀ lost per cycle.
    pub fade_rate: f64,
    #[serde(default)]
    pub fade_change: Option<FadeChange>,
    pub knee_coeff: f64,
    pub knee_power: f64,
    /// Ω.
    pub initial_resistance: f64,
    /// Relative resistance growth per cycle.
    pub resistance_growth: f64,
    /// A.
    pub current: f64,
    pub v_full: f64,
    pub v_empty: f64,
    /// Duration covered by each voltage curve, s.
    pub curve_seconds: f64,
    pub samples_per_curve: usize,
    /// Standard deviation of additive voltage noise, V.
    pub noise_std: f64,
    pub cycles: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            initial_capacity: 1.1,
            fade_rate: 1.6e-3,
            fade_change: None,
            knee_coeff: 1.0e-5,
            knee_power: 2.0,
            initial_resistance: 0.06,
            resistance_growth: 6e-3,
            current: 1.0,
            v_full: 3.2,
            v_empty: 2.0,
            curve_seconds: 360.0,
            samples_per_curve: 120,
            noise_std: 2e-3,
            cycles: 80,
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn linear_fade(&self, c: f64) -> f64 {
        match self.fade_change {
            Some(FadeChange { cycle, rate }) if c > cycle as f64 => {
                self.fade_rate * cycle as f64 + rate * (c - cycle as f64)
            }
            _ => self.fade_rate * c,
        }
    }

    pub fn capacity(&self, cycle: usize) -> f64 {
        let c = cycle as f64;
        self.initial_capacity * (1.0 - self.linear_fade(c) - self.knee_coeff * c.powf(self.knee_power))
    }

    pub fn resistance(&self, cycle: usize) -> f64 {
        self.initial_resistance * (1.0 + self.resistance_growth * cycle as f64)
    }

    fn ocv(&self, soc: f64) -> f64 {
        self.v_empty + (self.v_full - self.v_empty) * soc
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.cycles == 0 {
            return bad("cycles must be >= 1");
        }
        if self.samples_per_curve < 2 {
            return bad("samples_per_curve must be >= 2");
        }
        if !(self.curve_seconds > 0.0) || !(self.current > 0.0) || !(self.noise_std >= 0.0) {
            return bad("curve_seconds and current must be positive, noise non-negative");
        }
        if !(self.v_full > self.v_empty) {
            return bad("v_full must exceed v_empty");
        }
        if let Some(c) = (0..self.cycles).find(|&c| !(self.capacity(c) > 0.0)) {
            return bad(&format!("capacity is not positive at cycle {c}"));
        }
        if let Some(c) = (0..self.cycles).find(|&c| !(self.resistance(c) > 0.0)) {
            return bad(&format!("resistance is not positive at cycle {c}"));
        }
        Ok(())
    }
}

/// Generates one battery. Deterministic given `spec.seed`.
pub fn synth_battery(spec: &SynthSpec, id: &str) -> Result<BatteryHistory> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut draw = move || {
        if spec.noise_std == 0.0 {
            0.0
        } else {
            noise.sample(&mut rng)
        }
    };
    let last = (spec.samples_per_curve - 1) as f64;
    let times: Vec<f64> = (0..spec.samples_per_curve)
        .map(|i| i as f64 * spec.curve_seconds / last)
        .collect();

    let cycles = (0..spec.cycles)
        .map(|c| {
            let drop = spec.current * spec.resistance(c);
            let charge = times
                .iter()
                .map(|&t| (t, spec.ocv(t / spec.curve_seconds) + drop + draw()))
                .collect();
            let discharge = times
                .iter()
                .map(|&t| (t, spec.ocv(1.0 - t / spec.curve_seconds) - drop + draw()))
                .collect();
            CycleRecord {
                index: c,
                charge,
                discharge,
                capacity: spec.capacity(c),
            }
        })
        .collect();

    let mut metadata = BTreeMap::new();
    metadata.insert("source".to_string(), "synthetic".to_string());
    Ok(BatteryHistory {
        id: id.to_string(),
        cycles,
        metadata,
    })
}

/// Closed interval a parameter is drawn from uniformly.
pub type Range = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidLifeChange {
    pub cycle: (usize, usize),
    pub rate: Range,
}

/// Per-battery parameter ranges around a shared base spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSampler {
    pub base: SynthSpec,
    pub fade_rate: Range,
    pub knee_coeff: Range,
    pub initial_resistance: Range,
    pub resistance_growth: Range,
    pub fade_change: Option<MidLifeChange>,
}

impl FleetSampler {
    /// Smooth fade to roughly 0.8·Q₀ by the last cycle.
    pub fn desk(cycles: usize) -> Self {
        FleetSampler {
            base: SynthSpec {
                cycles,
                ..SynthSpec::default()
            },
            fade_rate: (1.2e-3, 2.0e-3),
            knee_coeff: (0.6e-5, 1.4e-5),
            initial_resistance: (0.05, 0.08),
            resistance_growth: (4e-3, 8e-3),
            fade_change: None,
        }
    }

    /// Slow early fade that switches to a faster rate at a random mid-life
    /// cycle, so the latest cycles say more about the next one than the
    /// window average does.
    pub fn path_dependent(cycles: usize) -> Self {
        FleetSampler {
            fade_rate: (0.5e-3, 1.5e-3),
            knee_coeff: (0.0, 2e-6),
            fade_change: Some(MidLifeChange {
                cycle: (cycles / 4, cycles * 5 / 8),
                rate: (2.5e-3, 4.5e-3),
            }),
            ..FleetSampler::desk(cycles)
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> SynthSpec {
        let mut u = |(lo, hi): Range| if lo < hi { rng.random_range(lo..=hi) } else { lo };
        let mut spec = SynthSpec {
            fade_rate: u(self.fade_rate),
            knee_coeff: u(self.knee_coeff),
            initial_resistance: u(self.initial_resistance),
            resistance_growth: u(self.resistance_growth),
            ..self.base.clone()
        };
        if let Some(change) = &self.fade_change {
            let rate = u(change.rate);
            let (lo, hi) = change.cycle;
            spec.fade_change = Some(FadeChange {
                cycle: rng.random_range(lo..=hi.max(lo)),
                rate,
            });
        }
        // below 2^53 so the seed survives any text format
        spec.seed = rng.random_range(0..1u64 << 53);
        spec
    }
}

/// `n` batteries named `cell_000`, `cell_001`, … with specs drawn from
/// `sampler`. Specs are drawn in order from one seeded stream and each
/// battery then has its own seed, so the fleet does not depend on threading.
pub fn synth_fleet(n: usize, sampler: &FleetSampler, seed: u64) -> Result<Vec<(SynthSpec, BatteryHistory)>> {
    if n == 0 {
        return Err(Error::Config("fleet size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs: Vec<SynthSpec> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
    specs
        .into_par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let battery = synth_battery(&spec, &format!("cell_{i:03}"))?;
            Ok((spec, battery))
        })
        .collect()
}
