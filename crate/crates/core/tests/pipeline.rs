use std::fs::File;

use ddn::checkpoint::Checkpoint;
use ddn::data::{
    build_fleet_frames, build_frames, read_fleet_dir, split_fleet, write_battery_csv, NormProfile, SplitRatios, Target,
};
use ddn::model::{DdnConfig, Pooling};
use ddn::report::{emit_report, read_predictions, Report, PREDICTIONS_FILE};
use ddn::study::{attention_study, size_study, SizeStudySetup};
use ddn::synth::{synth_fleet, FleetSampler};
use ddn::trainer::{evaluate, predict_frames, train, TrainConfig};

fn quick() -> TrainConfig {
    TrainConfig {
        max_epochs: 8,
        ..TrainConfig::default()
    }
}

#[test]
fn synthetic_fleet_survives_csv() {
    let dir = tempfile::tempdir().unwrap();
    let fleet = synth_fleet(4, &FleetSampler::desk(12), 3).unwrap();
    for (_, b) in &fleet {
        let f = File::create(dir.path().join(format!("{}.csv", b.id))).unwrap();
        write_battery_csv(f, b).unwrap();
    }
    let back = read_fleet_dir(dir.path()).unwrap();
    assert_eq!(back.len(), 4);
    for ((_, a), b) in fleet.iter().zip(&back) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.cycles, b.cycles);
    }
}

#[test]
fn mit_profile_maps_synthetic_curves_into_unit_band() {
    let fleet = synth_fleet(3, &FleetSampler::desk(80), 7).unwrap();
    let config = DdnConfig::desk(3);
    let frames = build_frames(&fleet[0].1, &config, &NormProfile::mit(), Target::Capacity).unwrap();
    assert_eq!(frames.len(), 77);
    for f in &frames {
        for c in f.history.iter() {
            assert!(c.features[1..].iter().flatten().all(|v| (0.0..=1.0).contains(v)));
            assert!((0.0..=1.0).contains(&c.features[0][0]));
        }
    }
}

#[test]
fn train_checkpoint_predict() {
    let fleet: Vec<_> = synth_fleet(6, &FleetSampler::desk(20), 11)
        .unwrap()
        .into_iter()
        .map(|(_, b)| b)
        .collect();
    let profile = NormProfile::mit();
    let config = DdnConfig::desk(3);
    let split = split_fleet(fleet, SplitRatios::default(), 1).unwrap();
    assert_eq!((split.train.len(), split.val.len(), split.test.len()), (4, 0, 2));
    let tr = build_fleet_frames(&split.train, &config, &profile, Target::Capacity).unwrap();
    let te = build_fleet_frames(&split.test, &config, &profile, Target::Capacity).unwrap();
    let cfg = TrainConfig {
        early_stopping: false,
        ..quick()
    };
    let (model, log) = train(&tr, &[], &config, &cfg).unwrap();
    assert_eq!(log.epochs.len(), 8);
    let metrics = evaluate(&model, &te, &profile).unwrap();
    assert!(metrics.rmse.is_finite() && metrics.n == te.len());

    let dir = tempfile::tempdir().unwrap();
    let ckpt = Checkpoint {
        model: model.clone(),
        profile: profile.clone(),
        target: Target::Capacity,
    };
    let path = dir.path().join("model.ckpt");
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(evaluate(&loaded.model, &te, &loaded.profile).unwrap(), metrics);

    let (rows, traces) = predict_frames(&model, &te, &profile).unwrap();
    assert_eq!(rows.len(), 2 * (20 - 3));
    assert_eq!(traces.len(), rows.len());
    let report = Report {
        metrics: Some(metrics),
        predictions: rows.clone(),
        traces,
        studies: Vec::new(),
    };
    emit_report(dir.path(), &report).unwrap();
    assert_eq!(read_predictions(&dir.path().join(PREDICTIONS_FILE)).unwrap(), rows);

    let first = &split.test[0];
    let own: Vec<_> = report
        .traces
        .iter()
        .filter(|(id, _)| *id == first.id)
        .map(|(_, t)| t.clone())
        .collect();
    let study = attention_study(&own, &first.capacities()).unwrap();
    assert_eq!(study.frames(), 17);
    assert_eq!(study.slots(), 3);
}

#[test]
fn soh_mode_targets_ratio_to_first_cycle() {
    let fleet = synth_fleet(1, &FleetSampler::desk(10), 2).unwrap();
    let b = &fleet[0].1;
    let mut profile = NormProfile::oxford();
    profile.capacity = None;
    let frames = build_frames(b, &DdnConfig::desk(3), &profile, Target::Soh).unwrap();
    for f in &frames {
        let want = b.cycles[f.target_cycle].capacity / b.cycles[0].capacity;
        assert_eq!(f.target, want);
    }
    assert_eq!(frames[0].reference.features[0][0], 1.0);
}

#[test]
fn size_study_nests_subsets() {
    let fleet: Vec<_> = synth_fleet(20, &FleetSampler::desk(12), 7)
        .unwrap()
        .into_iter()
        .map(|(_, b)| b)
        .collect();
    let config = DdnConfig {
        pooling: Pooling::Mean,
        ..DdnConfig::desk(3)
    };
    let cfg = quick();
    let profile = NormProfile::mit();
    let setup = SizeStudySetup {
        ddn_config: &config,
        train_config: &cfg,
        profile: &profile,
        target: Target::Capacity,
        split_seed: 7,
        validation_batteries: 1,
    };
    let rows = size_study(&fleet, &[2, 5, 16], &setup).unwrap();
    assert_eq!(rows.iter().map(|r| r.size()).collect::<Vec<_>>(), vec![2, 5, 16]);
    for w in rows.windows(2) {
        assert_eq!(w[0].train_batteries[..], w[1].train_batteries[..w[0].size()]);
    }
    assert!(rows.iter().all(|r| r.test_rmse.is_finite()));
    let single = size_study(&fleet, &[5], &setup).unwrap();
    assert_eq!(single, vec![rows[1].clone()]);
    assert!(size_study(&fleet, &[17], &setup).is_err());
    assert!(size_study(&fleet, &[0], &setup).is_err());
    assert!(size_study(&fleet, &[], &setup).is_err());
}
