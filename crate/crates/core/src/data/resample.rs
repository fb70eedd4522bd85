use crate::error::{Error, Result};

/// Samples a curve at `n_points` uniformly spaced times over `[0, window]`
/// by linear interpolation between the bracketing samples.
///
/// Outside the observed time range the nearest end value is held; a curve
/// that ends before the window therefore stays flat at its last value.
pub fn resample_linear(curve: &[(f64, f64)], window: f64, n_points: usize) -> Result<Vec<f64>> {
    if curve.len() < 2 {
        return Err(Error::Data(format!(
            "cannot resample a curve with {} sample(s)",
            curve.len()
        )));
    }
    if n_points < 2 {
        return Err(Error::Config("resampling needs at least 2 points".into()));
    }
    let last = (n_points - 1) as f64;
    Ok((0..n_points)
        .map(|k| interpolate(curve, k as f64 * window / last))
        .collect())
}

fn interpolate(curve: &[(f64, f64)], t: f64) -> f64 {
    let (t_first, v_first) = curve[0];
    let (t_last, v_last) = curve[curve.len() - 1];
    if t <= t_first {
        return v_first;
    }
    if t >= t_last {
        return v_last;
    }
    // first sample with time > t; 1 ≤ hi < len
    let hi = curve.partition_point(|&(ti, _)| ti <= t);
    let (t0, v0) = curve[hi - 1];
    let (t1, v1) = curve[hi];
    if t == t0 {
        return v0;
    }
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}
