use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use ddn::checkpoint::Checkpoint;
use ddn::data::{
    build_fleet_frames, build_frames, read_battery_csv, read_fleet_dir, split_fleet, write_battery_csv, BatteryHistory,
    SplitRatios,
};
use ddn::model::Pooling;
use ddn::report::{emit_report, write_predictions, Report};
use ddn::study::attention_study;
use ddn::synth::{synth_fleet, FleetSampler, SynthSpec};
use ddn::trainer::{evaluate, predict_frames, train};
use serde::{Deserialize, Serialize};

use crate::args::{EvalArgs, FleetKind, InspectArgs, PredictArgs, Subset, SynthArgs, TrainArgs};
use crate::config::{profile_override, resolve_train};
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "training_log.jsonl";
pub const SPLIT_FILE: &str = "split.toml";
pub const RUN_FILE: &str = "run.toml";

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    fleet: &'a str,
    sampler: &'a FleetSampler,
    battery: Vec<ManifestEntry<'a>>,
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    id: &'a str,
    spec: &'a SynthSpec,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SplitFile {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

fn refuse_overwrite(paths: &[PathBuf], force: bool) -> Result<(), CliError> {
    if force {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(CliError::Usage(format!(
            "{} already exists; pass --force to overwrite",
            p.display()
        ))),
        None => Ok(()),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn to_toml<T: Serialize>(value: &T) -> Result<String, CliError> {
    toml::to_string(value).map_err(|e| CliError::Usage(format!("cannot encode TOML: {e}")))
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let cycles = args.cycles as usize;
    let (sampler, name) = match args.fleet {
        FleetKind::Desk => (FleetSampler::desk(cycles), "desk"),
        FleetKind::PathDependent => (FleetSampler::path_dependent(cycles), "path-dependent"),
    };
    let fleet = synth_fleet(args.n as usize, &sampler, args.seed)?;

    let mut targets: Vec<PathBuf> = fleet
        .iter()
        .map(|(_, b)| args.out.join(format!("{}.csv", b.id)))
        .collect();
    targets.push(args.out.join(MANIFEST_FILE));
    refuse_overwrite(&targets, args.force)?;
    create_dir(&args.out)?;

    for ((_, battery), path) in fleet.iter().zip(&targets) {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        write_battery_csv(BufWriter::new(file), battery).map_err(|e| CliError::io(path, e))?;
    }
    let manifest = Manifest {
        seed: args.seed,
        fleet: name,
        sampler: &sampler,
        battery: fleet
            .iter()
            .map(|(spec, b)| ManifestEntry { id: &b.id, spec })
            .collect(),
    };
    write_text(&args.out.join(MANIFEST_FILE), &to_toml(&manifest)?)?;
    println!(
        "wrote {} batteries x {cycles} cycles to {}",
        fleet.len(),
        args.out.display()
    );
    Ok(())
}

pub fn train_cmd(args: &TrainArgs) -> Result<(), CliError> {
    let mut run = resolve_train(args)?;
    let ckpt_path = args.out.join(CHECKPOINT_FILE);
    refuse_overwrite(std::slice::from_ref(&ckpt_path), args.force)?;

    let fleet = read_fleet_dir(&args.data)?;
    let split = split_fleet(fleet, SplitRatios::default(), run.seed)?;
    if split.val.is_empty() && run.train.early_stopping {
        log::warn!("validation split is empty; training without early stopping");
        run.train.early_stopping = false;
    }
    let frames = |part: &[BatteryHistory]| build_fleet_frames(part, &run.model, &run.profile, run.target);
    let (tr, va, te) = (frames(&split.train)?, frames(&split.val)?, frames(&split.test)?);
    log::info!("{} train / {} val / {} test frames", tr.len(), va.len(), te.len());

    let (model, log) = train(&tr, &va, &run.model, &run.train)?;

    create_dir(&args.out)?;
    let checkpoint = Checkpoint {
        model,
        profile: run.profile.clone(),
        target: run.target,
    };
    checkpoint.save(&ckpt_path)?;
    let log_path = args.out.join(LOG_FILE);
    let file = File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    log.write_jsonl(BufWriter::new(file))
        .map_err(|e| CliError::io(&log_path, e))?;
    let ids = |part: &[BatteryHistory]| part.iter().map(|b| b.id.clone()).collect();
    let split_file = SplitFile {
        seed: run.seed,
        train: ids(&split.train),
        val: ids(&split.val),
        test: ids(&split.test),
    };
    write_text(&args.out.join(SPLIT_FILE), &to_toml(&split_file)?)?;
    write_text(&args.out.join(RUN_FILE), &to_toml(&run)?)?;

    println!(
        "trained {} epochs (best {}, {:?}); checkpoint {}",
        log.epochs.len(),
        log.best_epoch.map_or("none".to_string(), |e| e.to_string()),
        log.stop_reason,
        ckpt_path.display()
    );
    if !te.is_empty() {
        let m = evaluate(&checkpoint.model, &te, &checkpoint.profile)?;
        println!("test: rmse={} mape={} r2={} n={}", m.rmse, m.mape, m.r2, m.n);
    }
    Ok(())
}

fn select_subset(fleet: Vec<BatteryHistory>, split: &Path, subset: Subset) -> Result<Vec<BatteryHistory>, CliError> {
    let text = fs::read_to_string(split).map_err(|e| CliError::io(split, e))?;
    let file: SplitFile = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", split.display())))?;
    let wanted = match subset {
        Subset::Train => file.train,
        Subset::Val => file.val,
        Subset::Test => file.test,
    };
    let mut by_id: BTreeMap<String, BatteryHistory> = fleet.into_iter().map(|b| (b.id.clone(), b)).collect();
    // split-file order, so metrics sum in the same order as during training
    wanted
        .iter()
        .map(|id| {
            by_id.remove(id).ok_or_else(|| {
                ddn::Error::Data(format!(
                    "battery {id} listed in {} is not in the data directory",
                    split.display()
                ))
                .into()
            })
        })
        .collect()
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let profile = profile_override(&args.profile)?.unwrap_or(ckpt.profile);
    let mut fleet = read_fleet_dir(&args.data)?;
    if let (Some(split), Some(subset)) = (&args.split, args.subset) {
        fleet = select_subset(fleet, split, subset)?;
    }
    let frames = build_fleet_frames(&fleet, &ckpt.model.config, &profile, ckpt.target)?;
    let metrics = evaluate(&ckpt.model, &frames, &profile)?;
    let (predictions, traces) = predict_frames(&ckpt.model, &frames, &profile)?;
    emit_report(
        &args.out,
        &Report {
            metrics: Some(metrics),
            predictions,
            traces,
            studies: Vec::new(),
        },
    )?;
    println!(
        "rmse={} mape={} r2={} n={}",
        metrics.rmse, metrics.mape, metrics.r2, metrics.n
    );
    Ok(())
}

pub fn predict(args: &PredictArgs) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let profile = profile_override(&args.profile)?.unwrap_or(ckpt.profile);
    let battery = read_battery_csv(&args.data)?;
    let frames = build_frames(&battery, &ckpt.model.config, &profile, ckpt.target)?;
    let (rows, _) = predict_frames(&ckpt.model, &frames, &profile)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_predictions(&args.out, &rows)?;
    println!(
        "{} predictions for {} written to {}",
        rows.len(),
        battery.id,
        args.out.display()
    );
    Ok(())
}

pub fn inspect_attention(args: &InspectArgs) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    if ckpt.model.config.pooling != Pooling::Attention {
        return Err(ddn::Error::Data(format!(
            "{}: mean-pooling checkpoint has no attention trace",
            args.checkpoint.display()
        ))
        .into());
    }
    let profile = profile_override(&args.profile)?.unwrap_or(ckpt.profile);
    let fleet = if args.data.is_dir() {
        read_fleet_dir(&args.data)?
    } else {
        vec![read_battery_csv(&args.data)?]
    };

    let mut report = Report::default();
    for battery in &fleet {
        let frames = build_frames(battery, &ckpt.model.config, &profile, ckpt.target)?;
        let (_, traces) = predict_frames(&ckpt.model, &frames, &profile)?;
        let own: Vec<_> = traces.iter().map(|(_, t)| t.clone()).collect();
        let study = attention_study(&own, &battery.capacities())?;
        println!("{}: {} frames", battery.id, study.frames());
        for (slot, (abs, raw)) in study.abs_correlation.iter().zip(&study.raw_correlation).enumerate() {
            let fmt = |c: &Option<f64>| c.map_or("none".to_string(), |v| format!("{v:.4}"));
            println!(
                "  slot {slot}: corr(|dQ|, alpha) = {}, corr(dQ, alpha) = {}",
                fmt(abs),
                fmt(raw)
            );
        }
        report.traces.extend(traces);
        report.studies.push((battery.id.clone(), study));
    }
    emit_report(&args.out, &report)?;
    Ok(())
}
