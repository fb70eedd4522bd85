use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Charge,
    Discharge,
}

/// Affine voltage map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum VoltageRule {
    /// `(v − offset) / scale`
    Rising { offset: f64, scale: f64 },
    /// `(offset − v) / scale`
    Falling { offset: f64, scale: f64 },
}

impl VoltageRule {
    pub fn apply(&self, v: f64) -> f64 {
        match *self {
            VoltageRule::Rising { offset, scale } => (v - offset) / scale,
            VoltageRule::Falling { offset, scale } => (offset - v) / scale,
        }
    }

    fn scale(&self) -> f64 {
        match *self {
            VoltageRule::Rising { scale, .. } | VoltageRule::Falling { scale, .. } => scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityRange {
    pub min: f64,
    pub max: f64,
}

/// A named dataset preset: voltage normalization per phase, optional
/// capacity min-max bounds, resampling window and default history length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormProfile {
    pub name: String,
    pub charge: VoltageRule,
    pub discharge: VoltageRule,
    /// `None` passes capacities through unchanged.
    #[serde(default)]
    pub capacity: Option<CapacityRange>,
    /// Leading portion of each voltage curve that is resampled, seconds.
    pub window_seconds: f64,
    /// Default number of history cycles N for this dataset.
    #[serde(default = "default_history")]
    pub history: usize,
}

fn default_history() -> usize {
    3
}

pub const BUILTIN_PROFILES: [&str; 4] = ["nasa1", "nasa2", "mit", "oxford"];

impl NormProfile {
    pub fn nasa1() -> Self {
        NormProfile {
            name: "nasa1".into(),
            charge: VoltageRule::Rising {
                offset: 0.0,
                scale: 4.2,
            },
            discharge: VoltageRule::Falling {
                offset: 4.2,
                scale: 4.2,
            },
            capacity: Some(CapacityRange { min: 1.1, max: 2.1 }),
            window_seconds: 1500.0,
            history: 3,
        }
    }

    /// Same voltages as NASA1, capacities left unnormalized.
    pub fn nasa2() -> Self {
        NormProfile {
            name: "nasa2".into(),
            capacity: None,
            ..NormProfile::nasa1()
        }
    }

    pub fn mit() -> Self {
        NormProfile {
            name: "mit".into(),
            charge: VoltageRule::Falling {
                offset: 3.6,
                scale: 3.6,
            },
            discharge: VoltageRule::Falling {
                offset: 3.2,
                scale: 3.2,
            },
            capacity: Some(CapacityRange { min: 0.8, max: 1.1 }),
            window_seconds: 360.0,
            history: 30,
        }
    }

    pub fn oxford() -> Self {
        let rule = VoltageRule::Rising {
            offset: 2.7,
            scale: 1.5,
        };
        NormProfile {
            name: "oxford".into(),
            charge: rule,
            discharge: rule,
            capacity: Some(CapacityRange { min: 0.75, max: 1.0 }),
            window_seconds: 1500.0,
            history: 3,
        }
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "nasa1" => Ok(NormProfile::nasa1()),
            "nasa2" => Ok(NormProfile::nasa2()),
            "mit" => Ok(NormProfile::mit()),
            "oxford" => Ok(NormProfile::oxford()),
            other => Err(Error::Config(format!(
                "unknown profile {other:?} (expected one of {} or custom)",
                BUILTIN_PROFILES.join(", ")
            ))),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let profile: NormProfile = toml::from_str(text).map_err(|e| Error::Config(format!("profile: {e}")))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        NormProfile::from_toml_str(&text).map_err(|e| Error::Format {
            path: path.into(),
            message: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    pub fn validate(&self) -> Result<()> {
        for rule in [self.charge, self.discharge] {
            if rule.scale() == 0.0 || !rule.scale().is_finite() {
                return Err(Error::Config(format!("profile {}: zero voltage scale", self.name)));
            }
        }
        if let Some(r) = self.capacity {
            if !(r.min < r.max) {
                return Err(Error::Config(format!(
                    "profile {}: capacity min {} must be below max {}",
                    self.name, r.min, r.max
                )));
            }
        }
        if !(self.window_seconds > 0.0) {
            return Err(Error::Config(format!("profile {}: window must be positive", self.name)));
        }
        if self.history == 0 {
            return Err(Error::Config(format!("profile {}: history must be >= 1", self.name)));
        }
        Ok(())
    }

    pub fn normalize_voltage(&self, v: &[f64], phase: Phase) -> Vec<f64> {
        let rule = match phase {
            Phase::Charge => self.charge,
            Phase::Discharge => self.discharge,
        };
        v.iter().map(|&x| rule.apply(x)).collect()
    }

    pub fn normalize_capacity(&self, q: f64) -> f64 {
        match self.capacity {
            Some(r) => (q - r.min) / (r.max - r.min),
            None => q,
        }
    }

    pub fn denormalize_capacity(&self, q: f64) -> f64 {
        match self.capacity {
            Some(r) => q * (r.max - r.min) + r.min,
            None => q,
        }
    }
}
