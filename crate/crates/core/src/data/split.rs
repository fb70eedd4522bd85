use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.75,
            val: 0.10,
            test: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FleetSplit<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Shuffles `0..n` with a seeded RNG and cuts it into contiguous slices:
/// `floor(train·n)` training, `floor(val·n)` validation, remainder test.
pub fn split_indices(n: usize, ratios: SplitRatios, seed: u64) -> Result<FleetSplit<usize>> {
    let SplitRatios { train, val, test } = ratios;
    if [train, val, test].iter().any(|r| !(0.0..=1.0).contains(r)) || ((train + val + test) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must be in [0, 1] and sum to 1, got {train}/{val}/{test}"
        )));
    }
    if n == 0 {
        return Err(Error::Empty("fleet"));
    }
    if n < 3 && train > 0.0 && val > 0.0 && test > 0.0 {
        return Err(Error::Data(format!(
            "a fleet of {n} batteries cannot fill three splits"
        )));
    }
    let n_train = (train * n as f64 + 1e-9).floor() as usize;
    let n_val = ((val * n as f64 + 1e-9).floor() as usize).min(n - n_train);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test_part = order.split_off(n_train + n_val);
    let val_part = order.split_off(n_train);
    Ok(FleetSplit {
        train: order,
        val: val_part,
        test: test_part,
    })
}

/// Battery-level split; no battery lands in two parts.
pub fn split_fleet<T>(fleet: Vec<T>, ratios: SplitRatios, seed: u64) -> Result<FleetSplit<T>> {
    let idx = split_indices(fleet.len(), ratios, seed)?;
    let mut slots: Vec<Option<T>> = fleet.into_iter().map(Some).collect();
    let mut take = |ids: &[usize]| -> Vec<T> {
        ids.iter()
            .map(|&i| slots[i].take().expect("indices are a permutation"))
            .collect()
    };
    Ok(FleetSplit {
        train: take(&idx.train),
        val: take(&idx.val),
        test: take(&idx.test),
    })
}
