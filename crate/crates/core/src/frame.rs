use std::sync::Arc;

/// Raw per-cycle model inputs, one vector per feature in feature-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleFeatures {
    pub cycle: usize,
    pub features: Vec<Vec<f64>>,
}

/// N consecutive cycles plus the cycle-0 reference, labelled with the
/// normalized capacity of the cycle that follows the window.
///
/// Cycles are shared between overlapping frames of the same battery.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingFrame {
    pub battery_id: Arc<str>,
    /// Cycle index of the first history slot.
    pub start: usize,
    pub target_cycle: usize,
    pub reference: Arc<CycleFeatures>,
    pub history: Vec<Arc<CycleFeatures>>,
    pub target: f64,
}
