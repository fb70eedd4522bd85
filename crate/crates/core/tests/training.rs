#![allow(clippy::needless_range_loop)]

mod common;

use std::sync::Arc;

use common::*;
use ddn::frame::{CycleFeatures, MovingFrame};
use ddn::model::{Ddn, DdnConfig, HeadActivation, Pooling};
use ddn::trainer::{init_params, train, train_from, StopReason, TrainConfig};
use ddn::ErrorKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const COEF: [f64; 3] = [0.5, -0.3, 0.1];
const OFFSET: f64 = 0.2;

fn linear_frames(rng: &mut ChaCha8Rng, count: usize) -> Vec<MovingFrame> {
    (0..count)
        .map(|i| {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
            let y = OFFSET + COEF.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
            let cycle = Arc::new(CycleFeatures {
                cycle: i,
                features: vec![x],
            });
            MovingFrame {
                battery_id: Arc::from("lin"),
                start: i,
                target_cycle: i + 1,
                reference: Arc::clone(&cycle),
                history: vec![cycle],
                target: y,
            }
        })
        .collect()
}

/// Least squares `y ≈ [x, 1]·β` through the normal equations.
fn least_squares_residual(frames: &[MovingFrame]) -> f64 {
    let rows: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| {
            let mut r = f.history[0].features[0].clone();
            r.push(1.0);
            r
        })
        .collect();
    let k = rows[0].len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (r, f) in rows.iter().zip(frames) {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += r[i] * r[j];
            }
            a[i][k] += r[i] * f.target;
        }
    }
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for row in 0..k {
            if row != col {
                let factor = a[row][col] / a[col][col];
                for c in col..=k {
                    a[row][c] -= factor * a[col][c];
                }
            }
        }
    }
    let beta: Vec<f64> = (0..k).map(|i| a[i][k] / a[i][i]).collect();
    rows.iter()
        .zip(frames)
        .map(|(r, f)| {
            let p: f64 = r.iter().zip(&beta).map(|(x, b)| x * b).sum();
            (p - f.target).powi(2)
        })
        .sum::<f64>()
        / frames.len() as f64
}

fn linear_config() -> DdnConfig {
    DdnConfig {
        feature_lens: vec![3],
        embed_dims: vec![4],
        history: 1,
        mlp_hidden: 4,
        attn_hidden: 4,
        pooling: Pooling::Mean,
        head_activation: HeadActivation::None,
        exclude_reference_from_history: false,
    }
}

#[test]
fn linearly_solvable_task_is_learned() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let frames = linear_frames(&mut rng, 200);
    assert!(least_squares_residual(&frames) < 1e-25);
    let cfg = TrainConfig {
        learning_rate: 0.01,
        max_epochs: 400,
        batch_size: 16,
        early_stopping: false,
        ..TrainConfig::default()
    };
    let (model, log) = train(&frames, &[], &linear_config(), &cfg).unwrap();
    let loss = model.batch_loss(&frames).unwrap();
    assert!(loss < 1e-4, "final train loss {loss}");
    assert_eq!(log.epochs.len(), 400);
    assert_eq!(log.stop_reason, StopReason::MaxEpochs);
}

#[test]
fn training_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let config = random_config(&mut rng, Pooling::Attention);
    let frames = random_frames(&config, &mut rng, 50);
    let cfg = TrainConfig {
        max_epochs: 15,
        batch_size: 7,
        ..TrainConfig::default()
    };
    let (m1, l1) = train(&frames[..40], &frames[40..], &config, &cfg).unwrap();
    let (m2, l2) = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(|| train(&frames[..40], &frames[40..], &config, &cfg).unwrap());
    assert_eq!(m1, m2);
    assert_eq!(l1.without_timing(), l2.without_timing());
    let (m3, _) = train(&frames[..40], &frames[40..], &config, &TrainConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(m1, m3);
}

#[test]
fn early_stopping_returns_best_validation_epoch() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let config = random_config(&mut rng, Pooling::Attention);
        // targets are independent of the inputs, so validation loss stalls early
        let frames = random_frames(&config, &mut rng, 60);
        let cfg = TrainConfig {
            learning_rate: 0.01,
            max_epochs: 200,
            batch_size: 8,
            patience: 5,
            seed,
            ..TrainConfig::default()
        };
        let (model, log) = train(&frames[..45], &frames[45..], &config, &cfg).unwrap();
        let returned = model.batch_loss(&frames[45..]).unwrap();
        for e in &log.epochs {
            assert!(returned <= e.val_loss.unwrap(), "seed {seed} epoch {}", e.epoch);
        }
        let best = log.best_epoch.unwrap();
        assert_eq!(log.epochs[best - 1].val_loss.unwrap(), returned);
        if log.stop_reason == StopReason::EarlyStopping {
            assert!(log.epochs.len() < 200);
        }
    }
}

#[test]
fn zero_epochs_returns_initial_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let config = random_config(&mut rng, Pooling::Attention);
    let frames = random_frames(&config, &mut rng, 5);
    let cfg = TrainConfig {
        max_epochs: 0,
        ..TrainConfig::default()
    };
    let (model, log) = train(&frames, &frames, &config, &cfg).unwrap();
    assert_eq!(model.params, init_params(&config, cfg.seed).unwrap());
    assert!(log.epochs.is_empty());
}

#[test]
fn non_finite_loss_aborts_with_location() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let config = random_config(&mut rng, Pooling::Attention);
    let mut frames = random_frames(&config, &mut rng, 10);
    frames[3].target = f64::NAN;
    let cfg = TrainConfig {
        batch_size: 10,
        early_stopping: false,
        ..TrainConfig::default()
    };
    let err = train(&frames, &[], &config, &cfg).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Numeric);
    let msg = err.to_string();
    assert!(msg.contains("epoch 1") && msg.contains("batch 0"), "{msg}");
}

#[test]
fn empty_sets_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = random_config(&mut rng, Pooling::Mean);
    let frames = random_frames(&config, &mut rng, 4);
    assert!(train(&[], &frames, &config, &TrainConfig::default()).is_err());
    let err = train(&frames, &[], &config, &TrainConfig::default()).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Usage);
}

#[test]
fn resuming_continues_from_given_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let config = random_config(&mut rng, Pooling::Attention);
    let frames = random_frames(&config, &mut rng, 12);
    let model = Ddn::new(config.clone(), random_params(&config, &mut rng, 0.5)).unwrap();
    let cfg = TrainConfig {
        max_epochs: 0,
        early_stopping: false,
        ..TrainConfig::default()
    };
    let (same, _) = train_from(model.clone(), &frames, &[], &cfg).unwrap();
    assert_eq!(same, model);
}
