//! Battery telemetry ingestion and preprocessing: canonical CSV files,
//! voltage-curve resampling, normalization profiles, moving frames and
//! battery-level fleet splits.

mod csv_io;
mod frames;
mod profile;
mod resample;
mod split;

use std::collections::BTreeMap;

pub use csv_io::{parse_battery_csv, read_battery_csv, read_fleet_dir, write_battery_csv, CSV_HEADER};
pub use frames::{build_fleet_frames, build_frames, cycle_features, Target};
pub use profile::{CapacityRange, NormProfile, Phase, VoltageRule};
pub use resample::resample_linear;
pub use split::{split_fleet, split_indices, FleetSplit, SplitRatios};

/// A voltage curve as `(time s, voltage V)` samples.
pub type Curve = Vec<(f64, f64)>;

/// One charge/discharge cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub index: usize,
    pub charge: Curve,
    pub discharge: Curve,
    /// Measured discharge capacity, Ah.
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryHistory {
    pub id: String,
    /// Indexed contiguously from 0.
    pub cycles: Vec<CycleRecord>,
    pub metadata: BTreeMap<String, String>,
}

impl BatteryHistory {
    pub fn capacities(&self) -> Vec<f64> {
        self.cycles.iter().map(|c| c.capacity).collect()
    }
}
