//! Experiment definitions: a TOML file with optional command-line overrides.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use spinewalk::gait::{GaitId, GaitLibrary, GaitSchedule};
use spinewalk::model::RobotModel;
use spinewalk::mpc::{MpcConfig, VelocityCommand};
use spinewalk::sim::{Experiment, SimConfig};
use spinewalk::spine::{PresetLibrary, StrategyId, StrategyParams};

use crate::error::CliError;

/// Output root used when `SPINEWALK_OUT` is unset.
pub const DEFAULT_OUT: &str = "out";
pub const OUT_ENV: &str = "SPINEWALK_OUT";

/// One episode definition. Every field is optional in the file; relative
/// paths are resolved against the file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<PathBuf>,
    pub gait_library: Option<PathBuf>,
    pub presets: Option<PathBuf>,
    pub gait: Option<GaitId>,
    pub strategy: Option<StrategyId>,
    pub command: Option<VelocityCommand>,
    pub duration: Option<f64>,
    pub seed: Option<u64>,
    pub initial_velocity_noise: Option<f64>,
    pub output: Option<PathBuf>,
}

/// Flags that mirror [`ExperimentConfig`] keys and override them.
#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// Experiment TOML file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Robot model TOML (default: built-in model).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Gait library TOML (default: built-in gaits).
    #[arg(long)]
    pub gait_library: Option<PathBuf>,
    /// Spine preset TOML (default: built-in presets).
    #[arg(long)]
    pub presets: Option<PathBuf>,
    #[arg(long, value_parser = parse_gait)]
    pub gait: Option<GaitId>,
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<StrategyId>,
    /// Forward speed, m/s.
    #[arg(long, allow_negative_numbers = true)]
    pub vx: Option<f64>,
    /// Lateral speed, m/s.
    #[arg(long, allow_negative_numbers = true)]
    pub vy: Option<f64>,
    /// Yaw rate, rad/s.
    #[arg(long, allow_negative_numbers = true)]
    pub yaw_rate: Option<f64>,
    /// Episode length, s.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Standard deviation of the initial base velocity, m/s.
    #[arg(long)]
    pub initial_velocity_noise: Option<f64>,
    /// Output directory, relative to the output root.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn parse_gait(s: &str) -> Result<GaitId, String> {
    GaitId::parse(s).map_err(|e| e.to_string())
}

pub fn parse_strategy(s: &str) -> Result<StrategyId, String> {
    StrategyId::parse(s).map_err(|e| e.to_string())
}

fn relative_to(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        cfg.model = cfg.model.map(|p| relative_to(dir, p));
        cfg.gait_library = cfg.gait_library.map(|p| relative_to(dir, p));
        cfg.presets = cfg.presets.map(|p| relative_to(dir, p));
        Ok(cfg)
    }

    /// The config file named by `args`, if any, with the flags applied.
    pub fn from_args(args: &ExperimentArgs) -> Result<Self, CliError> {
        let mut cfg = match &args.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        macro_rules! take {
            ($($f:ident),*) => {$(if args.$f.is_some() { cfg.$f = args.$f.clone(); })*};
        }
        take!(model, gait_library, presets, gait, strategy, duration, seed, initial_velocity_noise, output);
        if args.vx.is_some() || args.vy.is_some() || args.yaw_rate.is_some() {
            let gait = cfg.gait.unwrap_or(GaitId::Walk);
            let mut c = cfg.command.unwrap_or_else(|| VelocityCommand::default_for(gait));
            c.vx = args.vx.unwrap_or(c.vx);
            c.vy = args.vy.unwrap_or(c.vy);
            c.yaw_rate = args.yaw_rate.unwrap_or(c.yaw_rate);
            cfg.command = Some(c);
        }
        Ok(cfg)
    }
}

/// Everything needed to run episodes, loaded and checked.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: RobotModel,
    pub gaits: GaitLibrary,
    pub presets: PresetLibrary,
    pub sim: SimConfig,
    pub mpc: MpcConfig,
    pub gait: GaitId,
    pub strategy: StrategyId,
    pub command: VelocityCommand,
    pub seed: u64,
    pub noise: f64,
    pub output: Option<PathBuf>,
}

impl Resolved {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let config = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        let model = match &cfg.model {
            Some(p) => RobotModel::load(p).map_err(|e| config(&e))?,
            None => RobotModel::default(),
        };
        let gaits = match &cfg.gait_library {
            Some(p) => GaitLibrary::load(p).map_err(|e| config(&e))?,
            None => GaitLibrary::defaults(),
        };
        let presets = match &cfg.presets {
            Some(p) => PresetLibrary::load(p).map_err(|e| config(&e))?,
            None => PresetLibrary::builtin(),
        };
        let gait = cfg.gait.unwrap_or(GaitId::Walk);
        let command = cfg.command.unwrap_or_else(|| VelocityCommand::default_for(gait));
        if !command.is_finite() {
            return Err(CliError::Config("command velocities must be finite".into()));
        }
        let mut sim = SimConfig::default();
        if let Some(d) = cfg.duration {
            sim.duration = d;
        }
        sim.validate().map_err(|e| config(&e))?;
        let noise = cfg.initial_velocity_noise.unwrap_or(0.0);
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(CliError::Config("initial velocity noise must be >= 0".into()));
        }
        let r = Self {
            model,
            gaits,
            presets,
            sim,
            mpc: MpcConfig::default(),
            gait,
            strategy: cfg.strategy.unwrap_or(StrategyId::Fixed),
            command,
            seed: cfg.seed.unwrap_or(0),
            noise,
            output: cfg.output.clone(),
        };
        r.schedule(gait)?;
        r.params(r.strategy, gait)?;
        Ok(r)
    }

    pub fn schedule(&self, gait: GaitId) -> Result<GaitSchedule, CliError> {
        self.gaits.get(gait.name()).cloned().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn params(&self, strategy: StrategyId, gait: GaitId) -> Result<StrategyParams, CliError> {
        self.presets.params(strategy, gait.name()).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn experiment(&self, gait: GaitId, strategy: StrategyId, command: VelocityCommand) -> Result<Experiment, CliError> {
        let mut e = Experiment::new(self.schedule(gait)?, self.params(strategy, gait)?, command);
        e.seed = self.seed;
        e.initial_velocity_noise = self.noise;
        Ok(e)
    }
}

/// Output directory: `dir` (or `default`) under the output root. Absolute
/// paths are used as given.
pub fn output_dir(dir: Option<&Path>, default: &str) -> PathBuf {
    let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT), PathBuf::from);
    match dir {
        Some(d) if d.is_absolute() => d.to_path_buf(),
        Some(d) => root.join(d),
        None => root.join(default),
    }
}
