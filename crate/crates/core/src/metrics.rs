//! Pooled regression metrics.
//!
//! All metrics pool every (battery, cycle) pair into one vector; there is no
//! per-battery averaging.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    /// Percent.
    pub mape: f64,
    pub r2: f64,
    pub n: usize,
}

impl Metrics {
    pub fn compute(pred: &[f64], actual: &[f64]) -> Result<Self> {
        Ok(Metrics {
            rmse: rmse(pred, actual)?,
            mape: mape(pred, actual)?,
            r2: r2(pred, actual)?,
            n: pred.len(),
        })
    }
}

fn check(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(Error::shape("metric", pred.len(), actual.len()));
    }
    if pred.is_empty() {
        return Err(Error::Empty("prediction set"));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check(pred, actual)?;
    let sse: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Mean absolute percentage error, in percent.
pub fn mape(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check(pred, actual)?;
    if let Some(i) = actual.iter().position(|&a| a == 0.0) {
        return Err(Error::Data(format!("MAPE undefined: actual value {i} is zero")));
    }
    let sum: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a).abs() / a.abs()).sum();
    Ok(sum / pred.len() as f64 * 100.0)
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check(pred, actual)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Data("R² undefined: actual values have zero variance".into()));
    }
    let ss_res: f64 = pred.iter().zip(actual).map(|(p, a)| (a - p) * (a - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Pearson correlation; `None` when either series is constant or shorter than 2.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::mse;

    #[test]
    fn worked_values() {
        assert_eq!(rmse(&[2.0, 2.0], &[1.0, 3.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
        assert!((mape(&[1.1], &[1.0]).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(mape(&[0.9, 1.2], &[0.9, 1.2]).unwrap(), 0.0);
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r2(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn error_paths() {
        assert!(rmse(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mape(&[1.0], &[0.0]).is_err());
        assert!(r2(&[1.0, 2.0], &[3.0, 3.0]).is_err());
    }

    #[test]
    fn rmse_squared_is_mse() {
        let p = [0.91, 1.02, 0.87, 1.05];
        let a = [0.9, 1.0, 0.9, 1.1];
        let r = rmse(&p, &a).unwrap();
        assert!((r * r - mse(&p, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn pearson_cases() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[0.0, 0.0, 0.0], &[3.0, 2.0, 1.0]), None);
        assert_eq!(pearson(&[1.0], &[1.0]), None);
    }
}
