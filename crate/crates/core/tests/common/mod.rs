//! Random small models, frames and independent oracles shared by the
//! integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::sync::Arc;

use ddn::frame::{CycleFeatures, MovingFrame};
use ddn::model::{Ddn, DdnConfig, DdnParams, HeadActivation, Pooling};
use ddn::tensor::{affine, concat, hadamard, relu, softmax};
use rand::Rng;

/// D ≤ 12, N ≤ 4, H₁ ≤ 6, H₂ ≤ 8.
pub fn random_config<R: Rng>(rng: &mut R, pooling: Pooling) -> DdnConfig {
    let features = rng.random_range(1..=3);
    let mut embed_dims: Vec<usize> = (0..features).map(|_| rng.random_range(1..=4)).collect();
    while embed_dims.iter().sum::<usize>() > 12 {
        let i = rng.random_range(0..features);
        embed_dims[i] = embed_dims[i].saturating_sub(1).max(1);
    }
    DdnConfig {
        feature_lens: (0..features).map(|_| rng.random_range(1..=5)).collect(),
        embed_dims,
        history: rng.random_range(1..=4),
        mlp_hidden: rng.random_range(1..=6),
        attn_hidden: rng.random_range(1..=8),
        pooling,
        head_activation: HeadActivation::None,
        exclude_reference_from_history: false,
    }
}

/// Every weight and bias uniform in `[-scale, scale]`.
pub fn random_params<R: Rng>(config: &DdnConfig, rng: &mut R, scale: f64) -> DdnParams {
    let mut p = DdnParams::zeros(config);
    for buf in p.buffers_mut() {
        for v in buf {
            *v = rng.random_range(-scale..=scale);
        }
    }
    p
}

pub fn random_model<R: Rng>(rng: &mut R, pooling: Pooling) -> Ddn {
    let config = random_config(rng, pooling);
    let params = random_params(&config, rng, 1.0);
    Ddn::new(config, params).unwrap()
}

fn random_cycle<R: Rng>(config: &DdnConfig, rng: &mut R, cycle: usize) -> Arc<CycleFeatures> {
    Arc::new(CycleFeatures {
        cycle,
        features: config
            .feature_lens
            .iter()
            .map(|&l| (0..l).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect(),
    })
}

pub fn random_frame<R: Rng>(config: &DdnConfig, rng: &mut R) -> MovingFrame {
    let n = config.history;
    let start = rng.random_range(0..10);
    MovingFrame {
        battery_id: Arc::from("rand"),
        start,
        target_cycle: start + n,
        reference: random_cycle(config, rng, 0),
        history: (0..n).map(|i| random_cycle(config, rng, start + i)).collect(),
        target: rng.random_range(0.0..1.0),
    }
}

pub fn random_frames<R: Rng>(config: &DdnConfig, rng: &mut R, count: usize) -> Vec<MovingFrame> {
    (0..count).map(|_| random_frame(config, rng)).collect()
}

/// Straight-line forward pass written directly against the tensor
/// primitives, without any of the model's own helpers.
pub struct Recomposed {
    pub prediction: f64,
    pub alpha: Option<Vec<f64>>,
}

pub fn recompose(model: &Ddn, frame: &MovingFrame) -> Recomposed {
    let p = &model.params;
    let embed = |c: &CycleFeatures| -> Vec<f64> {
        let parts: Vec<Vec<f64>> = p
            .embed
            .iter()
            .zip(&c.features)
            .map(|(layer, x)| affine(&layer.weight, &layer.bias, x).unwrap())
            .collect();
        let refs: Vec<&[f64]> = parts.iter().map(Vec::as_slice).collect();
        concat(&refs).unwrap()
    };
    let history: Vec<Vec<f64>> = frame.history.iter().map(|c| embed(c)).collect();
    let d = history[0].len();

    let (pooled, alpha) = match model.config.pooling {
        Pooling::Mean => {
            let mut l = vec![0.0; d];
            for e in &history {
                for k in 0..d {
                    l[k] += e[k];
                }
            }
            let n = history.len() as f64;
            (l.iter().map(|v| v / n).collect::<Vec<_>>(), None)
        }
        Pooling::Attention => {
            let e0 = embed(&frame.reference);
            let scores: Vec<f64> = history
                .iter()
                .map(|e| {
                    let diff: Vec<f64> = e.iter().zip(&e0).map(|(a, b)| a - b).collect();
                    let prod = hadamard(e, &e0).unwrap();
                    let w = concat(&[e, &e0, &diff, &prod]).unwrap();
                    let h = relu(&affine(&p.attn_hidden.weight, &p.attn_hidden.bias, &w).unwrap());
                    affine(&p.attn_score.weight, &p.attn_score.bias, &h).unwrap()[0]
                })
                .collect();
            let alpha = softmax(&scores);
            let mut l = vec![0.0; d];
            for (a, e) in alpha.iter().zip(&history) {
                for k in 0..d {
                    l[k] += a * e[k];
                }
            }
            (l, Some(alpha))
        }
    };
    let mut o = affine(&p.head_hidden.weight, &p.head_hidden.bias, &pooled).unwrap();
    if model.config.head_activation == HeadActivation::Relu {
        o = relu(&o);
    }
    let prediction = affine(&p.head_out.weight, &p.head_out.bias, &o).unwrap()[0];
    Recomposed { prediction, alpha }
}

/// Sign pattern of every relu input over a batch.
pub fn relu_pattern(model: &Ddn, frames: &[MovingFrame]) -> Vec<bool> {
    frames
        .iter()
        .flat_map(|f| model.record(f).unwrap().relu_inputs(model))
        .map(|v| v > 0.0)
        .collect()
}

/// Outcome of a central-difference check of every parameter.
#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub skipped_kinks: usize,
    /// Coordinates above the relative tolerance whose discrepancy is still
    /// within the rounding noise of the difference quotient (true gradient ≈ 0).
    pub within_noise: usize,
    pub worst_rel: f64,
    pub worst_at: String,
}

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const FD_FLOOR: f64 = 1e-6;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Rounding bound on a central difference of a loss of size `loss`: each
/// evaluation carries a few ulps of summation error, divided by 2h.
pub fn fd_noise(loss: f64) -> f64 {
    16.0 * f64::EPSILON * loss.abs().max(1.0) / FD_STEP
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Compares `loss_and_grad` against `(L(θ+h) − L(θ−h)) / 2h` for every
/// parameter, skipping coordinates whose perturbation flips any relu.
pub fn gradient_check(model: &Ddn, frames: &[MovingFrame]) -> GradCheck {
    let (loss, grads) = model.loss_and_grad(frames).unwrap();
    let noise = fd_noise(loss);
    let base = relu_pattern(model, frames);
    let mut out = GradCheck::default();
    let mut probe = model.clone();
    let names: Vec<String> = model
        .params
        .layers()
        .into_iter()
        .flat_map(|(n, _)| [format!("{n}.weight"), format!("{n}.bias")])
        .collect();
    let analytic: Vec<Vec<f64>> = grads.buffers().iter().map(|b| b.to_vec()).collect();

    for (b, name) in names.iter().enumerate() {
        for i in 0..analytic[b].len() {
            let orig = probe.params.buffers()[b][i];
            probe.params.buffers_mut()[b][i] = orig + FD_STEP;
            let plus = probe.batch_loss(frames).unwrap();
            let kink_plus = relu_pattern(&probe, frames) != base;
            probe.params.buffers_mut()[b][i] = orig - FD_STEP;
            let minus = probe.batch_loss(frames).unwrap();
            let kink_minus = relu_pattern(&probe, frames) != base;
            probe.params.buffers_mut()[b][i] = orig;
            if kink_plus || kink_minus {
                out.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            out.checked += 1;
            let rel = relative_error(analytic[b][i], numeric);
            if rel >= FD_TOLERANCE && (analytic[b][i] - numeric).abs() <= noise {
                out.within_noise += 1;
                continue;
            }
            if rel > out.worst_rel {
                out.worst_rel = rel;
                out.worst_at = format!("{name}[{i}]: analytic {} numeric {numeric}", analytic[b][i]);
            }
        }
    }
    out
}

pub fn loop_rmse(p: &[f64], a: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += (p[i] - a[i]) * (p[i] - a[i]);
    }
    (s / p.len() as f64).sqrt()
}

pub fn loop_mape(p: &[f64], a: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += ((p[i] - a[i]) / a[i]).abs();
    }
    100.0 * s / p.len() as f64
}

pub fn loop_r2(p: &[f64], a: &[f64]) -> f64 {
    let mut mean = 0.0;
    for v in a {
        mean += v;
    }
    mean /= a.len() as f64;
    let (mut res, mut tot) = (0.0, 0.0);
    for i in 0..a.len() {
        res += (a[i] - p[i]) * (a[i] - p[i]);
        tot += (a[i] - mean) * (a[i] - mean);
    }
    1.0 - res / tot
}

/// Textbook Pearson: covariance over the product of standard deviations.
pub fn loop_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..x.len() {
        cov += (x[i] - mx) * (y[i] - my) / n;
        vx += (x[i] - mx).powi(2) / n;
        vy += (y[i] - my).powi(2) / n;
    }
    cov / (vx.sqrt() * vy.sqrt())
}
