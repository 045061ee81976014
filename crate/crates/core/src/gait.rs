//! Sawtooth CPG, footfall schedules and Bézier swing trajectories.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lie::Vec3;
use crate::model::{Leg, N_LEGS};

#[derive(Debug, Error)]
pub enum GaitError {
    #[error("leg phase {0} is in stance, no swing target")]
    NotInSwing(f64),
    #[error("footfall grid needs at least 4 bins, got {0}")]
    TooFewBins(usize),
    #[error("invalid gait schedule: {0}")]
    Invalid(String),
    #[error("unknown gait `{0}`")]
    Unknown(String),
    #[error("reading gait file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing gait file: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaitId {
    Walk,
    Trot,
    Turn,
    /// All four feet planted; the CPG still runs so spine strategies have a
    /// phase to follow.
    Stand,
}

impl GaitId {
    pub const ALL: [GaitId; 4] = [GaitId::Walk, GaitId::Trot, GaitId::Turn, GaitId::Stand];

    pub fn name(self) -> &'static str {
        match self {
            GaitId::Walk => "walk",
            GaitId::Trot => "trot",
            GaitId::Turn => "turn",
            GaitId::Stand => "stand",
        }
    }

    pub fn parse(s: &str) -> Result<GaitId, GaitError> {
        GaitId::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| GaitError::Unknown(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitSchedule {
    pub id: GaitId,
    pub t_stance: f64,
    pub t_swing: f64,
    /// Phase offsets ψ, ordered fl, fr, rl, rr.
    pub offsets: [f64; N_LEGS],
    /// Swing apex height, m.
    #[serde(default = "default_lift")]
    pub lift_height: f64,
}

fn default_lift() -> f64 {
    0.03
}

impl GaitSchedule {
    pub fn walk() -> Self {
        Self { id: GaitId::Walk, t_stance: 0.3, t_swing: 0.1, offsets: [0.0, 0.5, 0.75, 0.25], lift_height: 0.03 }
    }

    pub fn trot() -> Self {
        Self { id: GaitId::Trot, t_stance: 0.2, t_swing: 0.1, offsets: [0.0, 0.5, 0.5, 0.0], lift_height: 0.03 }
    }

    pub fn turn() -> Self {
        Self { id: GaitId::Turn, ..Self::walk() }
    }

    /// Walk timing with every leg held in stance.
    pub fn stand() -> Self {
        Self { id: GaitId::Stand, ..Self::walk() }
    }

    pub fn named(id: GaitId) -> Self {
        match id {
            GaitId::Walk => Self::walk(),
            GaitId::Trot => Self::trot(),
            GaitId::Turn => Self::turn(),
            GaitId::Stand => Self::stand(),
        }
    }

    pub fn validate(&self) -> Result<(), GaitError> {
        if !(self.t_stance > 0.0 && self.t_swing > 0.0) {
            return Err(GaitError::Invalid("stance and swing durations must be > 0".into()));
        }
        if self.offsets.iter().any(|o| !(0.0..1.0).contains(o)) {
            return Err(GaitError::Invalid("phase offsets must lie in [0, 1)".into()));
        }
        if !(self.lift_height >= 0.0) {
            return Err(GaitError::Invalid("lift height must be >= 0".into()));
        }
        Ok(())
    }

    pub fn t_cycle(&self) -> f64 {
        self.t_stance + self.t_swing
    }

    /// Stance fraction of the cycle. The stand gait reports its walk duty;
    /// use [`GaitSchedule::in_stance`] for contact decisions.
    pub fn duty(&self) -> f64 {
        self.t_stance / self.t_cycle()
    }

    pub fn in_stance(&self, leg_phase: f64) -> bool {
        self.id == GaitId::Stand || leg_phase < self.duty()
    }

    /// Stance fraction actually commanded (1 for the stand gait).
    pub fn commanded_duty(&self) -> f64 {
        if self.id == GaitId::Stand {
            1.0
        } else {
            self.duty()
        }
    }
}

/// φ = (t mod t_cycle) / t_cycle.
pub fn cpg_phase(t: f64, schedule: &GaitSchedule) -> f64 {
    let tc = schedule.t_cycle();
    guard_unit(t.rem_euclid(tc) / tc)
}

/// φᵢ = (φ − ψᵢ) mod 1.
pub fn leg_phase(phi: f64, leg: Leg, schedule: &GaitSchedule) -> f64 {
    guard_unit((phi - schedule.offsets[leg.index()]).rem_euclid(1.0))
}

// rem_euclid can round up to exactly the modulus for tiny negative inputs.
fn guard_unit(x: f64) -> f64 {
    if x >= 1.0 {
        0.0
    } else {
        x
    }
}

/// Swing profile as Bézier control points `(progress, lift)`: progress runs
/// 0→1 along the start→end chord, lift is added to z in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct SwingCurve {
    points: Vec<[f64; 2]>,
    lift_height: f64,
}

impl SwingCurve {
    /// Six-point symmetric profile with zero velocity at lift-off and
    /// touchdown and its apex `height` at mid-swing.
    pub fn symmetric(height: f64) -> Self {
        // The lift polynomial a·(B₂ + B₃) peaks at s = 0.5 with value 0.625·a.
        let a = height / 0.625;
        Self {
            points: vec![[0.0, 0.0], [0.0, 0.0], [0.0, a], [1.0, a], [1.0, 0.0], [1.0, 0.0]],
            lift_height: height,
        }
    }

    pub fn from_points(points: Vec<[f64; 2]>, lift_height: f64) -> Result<Self, GaitError> {
        let (first, last) = match (points.first(), points.last()) {
            (Some(f), Some(l)) if points.len() >= 2 => (*f, *l),
            _ => return Err(GaitError::Invalid("swing curve needs at least two points".into())),
        };
        if first != [0.0, 0.0] || last != [1.0, 0.0] {
            return Err(GaitError::Invalid("swing curve must start at (0,0) and end at (1,0)".into()));
        }
        Ok(Self { points, lift_height })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn lift_height(&self) -> f64 {
        self.lift_height
    }

    /// `(progress, lift)` and their derivatives with respect to s.
    pub fn eval(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        let n = self.points.len() - 1;
        let mut p = [0.0; 2];
        let mut d = [0.0; 2];
        for i in 0..=n {
            let b = bernstein(n, i, s);
            p[0] += b * self.points[i][0];
            p[1] += b * self.points[i][1];
        }
        for i in 0..n {
            let b = bernstein(n - 1, i, s) * n as f64;
            d[0] += b * (self.points[i + 1][0] - self.points[i][0]);
            d[1] += b * (self.points[i + 1][1] - self.points[i][1]);
        }
        (p, d)
    }
}

fn bernstein(n: usize, i: usize, s: f64) -> f64 {
    binomial(n, i) * s.powi(i as i32) * (1.0 - s).powi((n - i) as i32)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Swing-foot position and velocity for leg phase `phi_i`.
pub fn swing_target(
    phi_i: f64,
    schedule: &GaitSchedule,
    curve: &SwingCurve,
    start: &Vec3,
    end: &Vec3,
) -> Result<(Vec3, Vec3), GaitError> {
    if schedule.in_stance(phi_i) {
        return Err(GaitError::NotInSwing(phi_i));
    }
    let duty = schedule.duty();
    let mut s = ((phi_i - duty) / (1.0 - duty)).clamp(0.0, 1.0);
    // Snap rounding noise at the boundaries so the endpoints are exact.
    if s < 1e-12 {
        s = 0.0;
    } else if s > 1.0 - 1e-12 {
        s = 1.0;
    }
    if s == 0.0 {
        return Ok((*start, Vec3::zeros()));
    }
    if s == 1.0 {
        return Ok((*end, Vec3::zeros()));
    }
    let ([u, w], [du, dw]) = curve.eval(s);
    let chord = end - start;
    let pos = start + chord * u + Vec3::z() * w;
    let vel = (chord * du + Vec3::z() * dw) / schedule.t_swing;
    Ok((pos, vel))
}

/// Commanded contact grid: `grid[leg][bin]` is true for stance.
pub fn footfall_reference(schedule: &GaitSchedule, n_bins: usize) -> Result<Vec<Vec<bool>>, GaitError> {
    if n_bins < 4 {
        return Err(GaitError::TooFewBins(n_bins));
    }
    Ok(Leg::ALL
        .iter()
        .map(|&leg| {
            (0..n_bins)
                .map(|b| {
                    let phi = (b as f64 + 0.5) / n_bins as f64;
                    schedule.in_stance(leg_phase(phi, leg, schedule))
                })
                .collect()
        })
        .collect())
}

/// Touchdown point on the ground for a foot whose neutral stance point is
/// `neutral` (middle-body frame): the neutral point carried forward by the
/// predicted base motion over `lead` seconds, then advanced by half a stance
/// of commanded motion so the foot straddles the neutral point while loaded.
#[allow(clippy::too_many_arguments)]
pub fn touchdown_point(
    base_position: &Vec3,
    yaw: f64,
    neutral: &Vec3,
    v_cmd_world: &Vec3,
    yaw_rate_cmd: f64,
    lead: f64,
    t_stance: f64,
) -> Vec3 {
    let t = lead + 0.5 * t_stance;
    let yaw_t = yaw + yaw_rate_cmd * t;
    let (s, c) = yaw_t.sin_cos();
    let offset = Vec3::new(c * neutral.x - s * neutral.y, s * neutral.x + c * neutral.y, 0.0);
    let p = base_position + v_cmd_world * t + offset;
    Vec3::new(p.x, p.y, 0.0)
}

/// Gait definitions as stored on disk: one table per gait name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GaitLibrary {
    #[serde(flatten)]
    pub gaits: BTreeMap<String, GaitSchedule>,
}

impl GaitLibrary {
    pub fn defaults() -> Self {
        let gaits = [GaitId::Walk, GaitId::Trot, GaitId::Turn, GaitId::Stand]
            .into_iter()
            .map(|g| (g.name().to_string(), GaitSchedule::named(g)))
            .collect();
        Self { gaits }
    }

    pub fn from_toml(text: &str) -> Result<Self, GaitError> {
        let lib: GaitLibrary = toml::from_str(text)?;
        for g in lib.gaits.values() {
            g.validate()?;
        }
        Ok(lib)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GaitError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| GaitError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn get(&self, name: &str) -> Result<&GaitSchedule, GaitError> {
        self.gaits.get(name).ok_or_else(|| GaitError::Unknown(name.to_string()))
    }
}
