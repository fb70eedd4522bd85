//! Run configuration: built-in profile < config file < command-line flags.

use std::path::{Path, PathBuf};

use ddn::data::{NormProfile, Target};
use ddn::model::{DdnConfig, HeadActivation, Pooling};
use ddn::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::args::{ProfileArgs, TrainArgs};
use crate::CliError;

pub const DEFAULT_PROFILE: &str = "mit";

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub profile: Option<String>,
    /// Relative paths are resolved against the config file's directory.
    pub profile_file: Option<PathBuf>,
    pub soh: Option<bool>,
    pub seed: Option<u64>,
    pub model: ModelOverrides,
    pub train: TrainOverrides,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    pub history: Option<usize>,
    /// Applied to every feature.
    pub embed_dim: Option<usize>,
    pub mlp_hidden: Option<usize>,
    pub attn_hidden: Option<usize>,
    pub pooling: Option<Pooling>,
    pub head_activation: Option<HeadActivation>,
    pub exclude_reference_from_history: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub min_delta: Option<f64>,
    pub early_stopping: Option<bool>,
}

impl ModelOverrides {
    fn apply(&self, c: &mut DdnConfig) {
        if let Some(n) = self.history {
            c.history = n;
        }
        if let Some(k) = self.embed_dim {
            c.embed_dims.iter_mut().for_each(|d| *d = k);
        }
        set(&mut c.mlp_hidden, self.mlp_hidden);
        set(&mut c.attn_hidden, self.attn_hidden);
        set(&mut c.pooling, self.pooling);
        set(&mut c.head_activation, self.head_activation);
        set(
            &mut c.exclude_reference_from_history,
            self.exclude_reference_from_history,
        );
    }
}

impl TrainOverrides {
    fn apply(&self, c: &mut TrainConfig) {
        set(&mut c.learning_rate, self.learning_rate);
        set(&mut c.beta1, self.beta1);
        set(&mut c.beta2, self.beta2);
        set(&mut c.epsilon, self.epsilon);
        set(&mut c.max_epochs, self.max_epochs);
        set(&mut c.batch_size, self.batch_size);
        set(&mut c.patience, self.patience);
        set(&mut c.min_delta, self.min_delta);
        set(&mut c.early_stopping, self.early_stopping);
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Fully resolved settings of a training run, written next to the checkpoint.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub target: Target,
    pub profile: NormProfile,
    pub model: DdnConfig,
    pub train: TrainConfig,
}

pub fn load_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut cfg: FileConfig = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if let (Some(p), Some(dir)) = (&cfg.profile_file, path.parent()) {
        cfg.profile_file = Some(dir.join(p));
    }
    Ok(cfg)
}

/// Profile from flags, else from the file layer, else the default.
pub fn resolve_profile(flags: &ProfileArgs, file: Option<&FileConfig>) -> Result<NormProfile, CliError> {
    if let Some(p) = &flags.profile_file {
        return Ok(NormProfile::load(p)?);
    }
    if let Some(name) = &flags.profile {
        return Ok(NormProfile::builtin(name)?);
    }
    if let Some(f) = file {
        if let Some(p) = &f.profile_file {
            return Ok(NormProfile::load(p)?);
        }
        if let Some(name) = &f.profile {
            return Ok(NormProfile::builtin(name)?);
        }
    }
    Ok(NormProfile::builtin(DEFAULT_PROFILE)?)
}

/// Explicit profile flags only; `None` means "keep the checkpoint's".
pub fn profile_override(flags: &ProfileArgs) -> Result<Option<NormProfile>, CliError> {
    if flags.profile.is_none() && flags.profile_file.is_none() {
        return Ok(None);
    }
    resolve_profile(flags, None).map(Some)
}

pub fn resolve_train(args: &TrainArgs) -> Result<RunConfig, CliError> {
    let file = args
        .config
        .as_deref()
        .map(load_file_config)
        .transpose()?
        .unwrap_or_default();
    let profile = resolve_profile(&args.profile, Some(&file))?;

    let mut model = DdnConfig::standard(profile.history);
    file.model.apply(&mut model);
    ModelOverrides {
        history: args.history_n,
        embed_dim: args.embed_dim,
        mlp_hidden: args.mlp_hidden,
        attn_hidden: args.attn_hidden,
        pooling: args.pooling,
        ..ModelOverrides::default()
    }
    .apply(&mut model);
    model.validate()?;

    let mut train = TrainConfig::default();
    file.train.apply(&mut train);
    TrainOverrides {
        learning_rate: args.lr,
        max_epochs: args.epochs,
        batch_size: args.batch_size,
        patience: args.patience,
        ..TrainOverrides::default()
    }
    .apply(&mut train);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    if seed > i64::MAX as u64 {
        return Err(CliError::Usage(format!("seed {seed} exceeds {}", i64::MAX)));
    }
    train.seed = seed;
    train.validate()?;

    let target = if args.soh || file.soh.unwrap_or(false) {
        Target::Soh
    } else {
        Target::Capacity
    };
    Ok(RunConfig {
        seed,
        target,
        profile,
        model,
        train,
    })
}
