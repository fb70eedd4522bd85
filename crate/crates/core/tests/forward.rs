mod common;

use common::*;
use ddn::model::{HeadActivation, Pooling};
use ddn::tensor::Matrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn forward_matches_recomposition() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let pooling = if seed % 4 == 3 {
            Pooling::Mean
        } else {
            Pooling::Attention
        };
        let mut model = random_model(&mut rng, pooling);
        if seed % 5 == 0 {
            model.config.head_activation = HeadActivation::Relu;
        }
        for frame in random_frames(&model.config, &mut rng, 5) {
            let got = model.forward(&frame).unwrap();
            let want = recompose(&model, &frame);
            assert!((got.value - want.prediction).abs() < 1e-10, "seed {seed}");
            match (got.trace, want.alpha) {
                (Some(t), Some(a)) => {
                    for (x, y) in t.weights.iter().zip(&a) {
                        assert!((x - y).abs() < 1e-10);
                    }
                    assert_eq!(t.start, frame.start);
                    assert_eq!(t.target_cycle, frame.target_cycle);
                }
                (None, None) => {}
                other => panic!("trace mismatch: {other:?}"),
            }
            assert_eq!(model.record(&frame).unwrap().prediction(), got.value);
        }
    }
}

fn any_seed() -> impl Strategy<Value = u64> {
    any::<u64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn attention_weights_sum_to_one(seed in any_seed()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, Pooling::Attention);
        let frame = random_frame(&model.config, &mut rng);
        let alpha = model.forward(&frame).unwrap().trace.unwrap().weights;
        prop_assert_eq!(alpha.len(), model.config.history);
        prop_assert!(alpha.iter().all(|&a| (0.0..=1.0).contains(&a)));
        prop_assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_hidden_weights_reduce_to_mean(seed in any_seed()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = random_model(&mut rng, Pooling::Attention);
        let (r, c) = model.params.attn_hidden.weight.shape();
        model.params.attn_hidden.weight = Matrix::zeros(r, c);
        let frame = random_frame(&model.config, &mut rng);
        let attention = model.forward(&frame).unwrap().value;
        let mut mean = model.clone();
        mean.config.pooling = Pooling::Mean;
        prop_assert!((attention - mean.forward(&frame).unwrap().value).abs() < 1e-12);
    }

    #[test]
    fn argmax_survives_positive_score_scaling(seed in any_seed(), scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, Pooling::Attention);
        let frame = random_frame(&model.config, &mut rng);
        let argmax = |w: &[f64]| {
            w.iter().enumerate().fold((0, f64::MIN), |best, (i, &v)| if v > best.1 { (i, v) } else { best }).0
        };
        let before = model.forward(&frame).unwrap().trace.unwrap().weights;
        let mut scaled = model.clone();
        scaled.params.attn_score.weight.scale(scale);
        let after = scaled.forward(&frame).unwrap().trace.unwrap().weights;
        // ties are broken by the first index in both
        let mut sorted = before.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        prop_assume!(sorted.len() < 2 || sorted[0] - sorted[1] > 1e-12);
        prop_assert_eq!(argmax(&before), argmax(&after));
    }
}
