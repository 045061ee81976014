//! Spine trajectory strategies. Each produces per-joint PD targets
//! `(θ_d, Kp, Kd)` for the four spine joints `[fy, fz, ry, rz]`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lie::Vec3;
use crate::model::{Leg, SpineJoint, N_LEGS, N_SPINE};

/// Joint stop of every spine joint, rad.
pub const SPINE_LIMIT: f64 = PI / 12.0;

/// Feet closer than this give no usable left-right direction.
const DEGENERATE_FEET: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SpineError {
    #[error("invalid strategy parameters: {0}")]
    InvalidParams(String),
    #[error("left and right feet coincide ({0} m apart)")]
    DegenerateFeet(f64),
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("no preset for strategy `{strategy}` and gait `{gait}`")]
    MissingPreset { strategy: String, gait: String },
    #[error("reading preset file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing preset file: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyId {
    Fixed,
    Stiffness,
    FootTracking,
    /// Time-varying with amplitudes and phases taken from dog data.
    TimeReal,
    /// Time-varying with grid-searched constants.
    TimeOpt,
}

impl StrategyId {
    pub const ALL: [StrategyId; 5] =
        [StrategyId::Fixed, StrategyId::Stiffness, StrategyId::FootTracking, StrategyId::TimeReal, StrategyId::TimeOpt];

    pub fn name(self) -> &'static str {
        match self {
            StrategyId::Fixed => "fixed",
            StrategyId::Stiffness => "stiffness",
            StrategyId::FootTracking => "foot_tracking",
            StrategyId::TimeReal => "time_real",
            StrategyId::TimeOpt => "time_opt",
        }
    }

    pub fn parse(s: &str) -> Result<StrategyId, SpineError> {
        StrategyId::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| SpineError::UnknownStrategy(s.to_string()))
    }

    pub fn is_time_varying(self) -> bool {
        matches!(self, StrategyId::TimeReal | StrategyId::TimeOpt)
    }
}

/// Constants for one spine joint. Their meaning depends on the strategy:
///
/// | strategy      | c1                | c2          | c3     | c4 |
/// |---------------|-------------------|-------------|--------|----|
/// | stiffness     | Kp amplitude      | phase, rad  | mean Kp| Kd |
/// | foot_tracking | gain (rad/m, rad) | Kp          | Kd     | -  |
/// | time-varying  | amplitude, rad    | phase, rad  | Kp     | Kd |
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    #[serde(default)]
    pub c4: f64,
    /// Sine periods per gait cycle (time-varying strategies only).
    #[serde(default = "one")]
    pub cycles: f64,
}

fn one() -> f64 {
    1.0
}

impl JointParams {
    pub fn new(c1: f64, c2: f64, c3: f64, c4: f64) -> Self {
        Self { c1, c2, c3, c4, cycles: 1.0 }
    }

    pub fn with_cycles(mut self, cycles: f64) -> Self {
        self.cycles = cycles;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyParams {
    pub strategy: StrategyId,
    pub joints: [JointParams; N_SPINE],
}

impl StrategyParams {
    pub fn fixed() -> Self {
        Self { strategy: StrategyId::Fixed, joints: [JointParams::new(0.0, 0.0, 0.0, 0.0); N_SPINE] }
    }

    pub fn validate(&self) -> Result<(), SpineError> {
        let bad = |msg: String| Err(SpineError::InvalidParams(msg));
        for (j, p) in SpineJoint::ALL.iter().zip(&self.joints) {
            if [p.c1, p.c2, p.c3, p.c4, p.cycles].iter().any(|v| !v.is_finite()) {
                return bad(format!("{}: constants must be finite", j.name()));
            }
            match self.strategy {
                StrategyId::Fixed => {}
                StrategyId::Stiffness => {
                    if p.c3 < p.c1.abs() {
                        return bad(format!("{}: stiffness can go negative (c3 < |c1|)", j.name()));
                    }
                    if p.c4 < 0.0 {
                        return bad(format!("{}: damping must be >= 0", j.name()));
                    }
                }
                StrategyId::FootTracking => {
                    if p.c2 < 0.0 || p.c3 < 0.0 {
                        return bad(format!("{}: gains must be >= 0", j.name()));
                    }
                }
                StrategyId::TimeReal | StrategyId::TimeOpt => {
                    if p.c3 < 0.0 || p.c4 < 0.0 {
                        return bad(format!("{}: gains must be >= 0", j.name()));
                    }
                    if !(p.cycles > 0.0) {
                        return bad(format!("{}: cycles must be > 0", j.name()));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpineCommand {
    pub theta_d: [f64; N_SPINE],
    pub kp: [f64; N_SPINE],
    pub kd: [f64; N_SPINE],
    pub tau_ff: [f64; N_SPINE],
}

impl SpineCommand {
    /// PD plus feedforward torque per joint.
    pub fn torque(&self, angle: &[f64; N_SPINE], velocity: &[f64; N_SPINE]) -> [f64; N_SPINE] {
        std::array::from_fn(|j| self.kp[j] * (self.theta_d[j] - angle[j]) - self.kd[j] * velocity[j] + self.tau_ff[j])
    }
}

fn clamp_target(theta: f64) -> f64 {
    theta.clamp(-SPINE_LIMIT, SPINE_LIMIT)
}

/// θ_d = 0, Kp = C₁ sin(2πφ + C₂) + C₃, Kd = C₄.
pub fn stiffness_command(phi: f64, params: &StrategyParams) -> Result<SpineCommand, SpineError> {
    params.validate()?;
    let mut cmd = SpineCommand::default();
    for (j, p) in params.joints.iter().enumerate() {
        cmd.kp[j] = p.c1 * (2.0 * PI * phi + p.c2).sin() + p.c3;
        cmd.kd[j] = p.c4;
    }
    Ok(cmd)
}

/// Pitch follows the mean fore-aft foot offset of the pair; yaw follows
/// the angle of the left-right foot line from the lateral axis. Foot and
/// neutral positions are in the chassis frame, ordered fl, fr, rl, rr.
pub fn foot_tracking_command(
    feet: &[Vec3; N_LEGS],
    neutrals: &[Vec3; N_LEGS],
    params: &StrategyParams,
) -> Result<SpineCommand, SpineError> {
    params.validate()?;
    let pair = |l: Leg, r: Leg| -> Result<(f64, f64), SpineError> {
        let (il, ir) = (l.index(), r.index());
        let pitch = (feet[il].x - neutrals[il].x + feet[ir].x - neutrals[ir].x) / 2.0;
        let d = feet[il] - feet[ir];
        let n = d.norm();
        if n < DEGENERATE_FEET {
            return Err(SpineError::DegenerateFeet(n));
        }
        let unsigned = (d.y / n).clamp(-1.0, 1.0).acos();
        // Left foot ahead of the right yaws the spine positively.
        let yaw = if d.x < 0.0 { -unsigned } else { unsigned };
        Ok((pitch, yaw))
    };
    let (fp, fy) = pair(Leg::FrontLeft, Leg::FrontRight)?;
    let (rp, ry) = pair(Leg::RearLeft, Leg::RearRight)?;
    let raw = [fp, fy, rp, ry];
    let mut cmd = SpineCommand::default();
    for (j, p) in params.joints.iter().enumerate() {
        cmd.theta_d[j] = clamp_target(p.c1 * raw[j]);
        cmd.kp[j] = p.c2;
        cmd.kd[j] = p.c3;
    }
    Ok(cmd)
}

/// θ_d = C₁ sin(2π·cycles·φ + C₂), Kp = C₃, Kd = C₄.
pub fn time_varying_command(phi: f64, params: &StrategyParams) -> Result<SpineCommand, SpineError> {
    params.validate()?;
    let mut cmd = SpineCommand::default();
    for (j, p) in params.joints.iter().enumerate() {
        cmd.theta_d[j] = clamp_target(p.c1 * (2.0 * PI * p.cycles * phi + p.c2).sin());
        cmd.kp[j] = p.c3;
        cmd.kd[j] = p.c4;
    }
    Ok(cmd)
}

/// Zero targets and gains. The simulator freezes the spine for this
/// strategy rather than servoing it.
pub fn fixed_command() -> SpineCommand {
    SpineCommand::default()
}

/// Dispatches on the strategy id. `feet` and `neutrals` are only read by
/// foot tracking.
pub fn command(
    phi: f64,
    params: &StrategyParams,
    feet: &[Vec3; N_LEGS],
    neutrals: &[Vec3; N_LEGS],
) -> Result<SpineCommand, SpineError> {
    match params.strategy {
        StrategyId::Fixed => Ok(fixed_command()),
        StrategyId::Stiffness => stiffness_command(phi, params),
        StrategyId::FootTracking => foot_tracking_command(feet, neutrals, params),
        StrategyId::TimeReal | StrategyId::TimeOpt => time_varying_command(phi, params),
    }
}

/// One preset file section: the constants plus an optional provenance note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetEntry {
    pub joints: [JointParams; N_SPINE],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Strategy presets keyed `[strategy.gait]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PresetLibrary {
    #[serde(flatten)]
    pub presets: BTreeMap<String, BTreeMap<String, PresetEntry>>,
}

impl PresetLibrary {
    pub fn from_toml(text: &str) -> Result<Self, SpineError> {
        let lib: PresetLibrary = toml::from_str(text)?;
        for (s, gaits) in &lib.presets {
            let strategy = StrategyId::parse(s)?;
            for entry in gaits.values() {
                StrategyParams { strategy, joints: entry.joints }.validate()?;
            }
        }
        Ok(lib)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SpineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| SpineError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("presets serialize")
    }

    /// Parameters for `(strategy, gait)`. The fixed strategy needs no entry.
    pub fn params(&self, strategy: StrategyId, gait: &str) -> Result<StrategyParams, SpineError> {
        if strategy == StrategyId::Fixed {
            return Ok(StrategyParams::fixed());
        }
        self.presets
            .get(strategy.name())
            .and_then(|g| g.get(gait))
            .map(|e| StrategyParams { strategy, joints: e.joints })
            .ok_or_else(|| SpineError::MissingPreset { strategy: strategy.name().into(), gait: gait.into() })
    }

    pub fn insert(&mut self, strategy: StrategyId, gait: &str, entry: PresetEntry) {
        self.presets.entry(strategy.name().to_string()).or_default().insert(gait.to_string(), entry);
    }

    /// The presets shipped in `configs/spine_presets.toml`.
    pub fn builtin() -> Self {
        Self::from_toml(include_str!("../../../configs/spine_presets.toml")).expect("shipped presets are valid")
    }
}
