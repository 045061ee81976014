//! Episode logs: per-step records, a self-describing CSV format and the
//! JSON summary.
//!
//! CSV layout: a first line `# {meta json}`, a header, then one row per sim
//! step with columns
//!
//! | group            | columns                                  |
//! |------------------|------------------------------------------|
//! | time             | `t`, `phi`                               |
//! | base (18)        | `x y z`, `r00..r22` row-major, `vx vy vz`, `wx wy wz` |
//! | joints (3 × 16)  | `q_<j>`, `dq_<j>`, `tau_<j>`             |
//! | feet             | `f<leg>_x/y/z`, `c<leg>`                 |
//! | power (16)       | `p_<j>`                                  |
//! | reference        | `ref_x.. ref_r00.. ref_vx.. ref_wx..`, `spine_target_<j>` |
//! | MPC telemetry    | `mpc_solved`, `mpc_iter`, `mpc_kkt`, `mpc_status` |
//!
//! Joint names follow the joint vector order `fy fz ry rz fl_roll fl_pitch
//! fl_knee fr_.. rl_.. rr_..`. Wall-clock solve times are kept in memory only
//! so that logs of identical runs are byte-identical.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::gait::GaitSchedule;
use crate::lie::{Mat3, Rot3, Vec3};
use crate::model::{BodyState, Leg, N_JOINTS, N_LEGS, N_SPINE};
use crate::mpc::{SolveStatus, VelocityCommand};
use crate::spine::StrategyId;

pub const JOINT_NAMES: [&str; N_JOINTS] = [
    "fy", "fz", "ry", "rz", "fl_roll", "fl_pitch", "fl_knee", "fr_roll", "fr_pitch", "fr_knee", "rl_roll", "rl_pitch",
    "rl_knee", "rr_roll", "rr_pitch", "rr_knee",
];

/// Episode constants needed to interpret the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub dt: f64,
    pub control_divisor: usize,
    pub mass: f64,
    pub gravity: f64,
    pub nominal_height: f64,
    pub gait: GaitSchedule,
    pub strategy: StrategyId,
    pub command: VelocityCommand,
    /// Start of the steady-state window: ramp time plus settling, s.
    pub steady_start: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub time: f64,
    pub phi: f64,
    pub base: BodyState,
    pub joint_angle: [f64; N_JOINTS],
    pub joint_velocity: [f64; N_JOINTS],
    pub joint_torque: [f64; N_JOINTS],
    pub foot_force: [Vec3; N_LEGS],
    pub contact: [bool; N_LEGS],
    pub power: [f64; N_JOINTS],
    pub ref_base: BodyState,
    pub spine_target: [f64; N_SPINE],
    /// True on steps where the MPC ran.
    pub mpc_solved: bool,
    pub mpc_iterations: usize,
    pub mpc_kkt: f64,
    pub mpc_status: SolveStatus,
}

impl LogRecord {
    /// A record at rest at the origin with zero joints, forces and power;
    /// the starting point for synthetic logs.
    pub fn blank(time: f64, phi: f64) -> Self {
        let rest = BodyState::at_rest(Vec3::zeros());
        Self {
            time,
            phi,
            base: rest,
            joint_angle: [0.0; N_JOINTS],
            joint_velocity: [0.0; N_JOINTS],
            joint_torque: [0.0; N_JOINTS],
            foot_force: [Vec3::zeros(); N_LEGS],
            contact: [false; N_LEGS],
            power: [0.0; N_JOINTS],
            ref_base: rest,
            spine_target: [0.0; N_SPINE],
            mpc_solved: false,
            mpc_iterations: 0,
            mpc_kkt: 0.0,
            mpc_status: SolveStatus::Optimal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    /// Roll or pitch beyond the configured limit.
    Tilted,
    /// Base below the configured height fraction.
    Collapsed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub meta: LogMeta,
    pub records: Vec<LogRecord>,
    pub stop: StopReason,
    /// Wall-clock seconds per MPC solve, in call order.
    pub mpc_wall_time: Vec<f64>,
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Degraded => "degraded",
        SolveStatus::Stale => "stale",
        SolveStatus::Idle => "idle",
    }
}

fn parse_status(s: &str) -> Result<SolveStatus, SimError> {
    Ok(match s {
        "optimal" => SolveStatus::Optimal,
        "degraded" => SolveStatus::Degraded,
        "stale" => SolveStatus::Stale,
        "idle" => SolveStatus::Idle,
        other => return Err(SimError::Format(format!("unknown MPC status {other:?}"))),
    })
}

fn base_header(prefix: &str, out: &mut Vec<String>) {
    for c in ["x", "y", "z"] {
        out.push(format!("{prefix}{c}"));
    }
    for r in 0..3 {
        for c in 0..3 {
            out.push(format!("{prefix}r{r}{c}"));
        }
    }
    for c in ["vx", "vy", "vz", "wx", "wy", "wz"] {
        out.push(format!("{prefix}{c}"));
    }
}

pub fn csv_header() -> Vec<String> {
    let mut h = vec!["t".to_string(), "phi".to_string()];
    base_header("", &mut h);
    for p in ["q_", "dq_", "tau_"] {
        h.extend(JOINT_NAMES.iter().map(|n| format!("{p}{n}")));
    }
    for leg in Leg::ALL {
        for c in ["x", "y", "z"] {
            h.push(format!("f{}_{c}", leg.short_name()));
        }
    }
    h.extend(Leg::ALL.iter().map(|l| format!("c{}", l.short_name())));
    h.extend(JOINT_NAMES.iter().map(|n| format!("p_{n}")));
    base_header("ref_", &mut h);
    h.extend(JOINT_NAMES[..N_SPINE].iter().map(|n| format!("spine_target_{n}")));
    h.extend(["mpc_solved", "mpc_iter", "mpc_kkt", "mpc_status"].map(String::from));
    h
}

fn push_base(b: &BodyState, out: &mut Vec<String>) {
    out.extend(b.position.iter().map(|v| v.to_string()));
    let m = b.rotation.matrix();
    for r in 0..3 {
        for c in 0..3 {
            out.push(m[(r, c)].to_string());
        }
    }
    out.extend(b.velocity.iter().chain(b.angular_velocity.iter()).map(|v| v.to_string()));
}

impl LogRecord {
    fn to_row(&self) -> Vec<String> {
        let mut r = vec![self.time.to_string(), self.phi.to_string()];
        push_base(&self.base, &mut r);
        for arr in [&self.joint_angle, &self.joint_velocity, &self.joint_torque] {
            r.extend(arr.iter().map(|v| v.to_string()));
        }
        for f in &self.foot_force {
            r.extend(f.iter().map(|v| v.to_string()));
        }
        r.extend(self.contact.iter().map(|&c| u8::from(c).to_string()));
        r.extend(self.power.iter().map(|v| v.to_string()));
        push_base(&self.ref_base, &mut r);
        r.extend(self.spine_target.iter().map(|v| v.to_string()));
        r.push(u8::from(self.mpc_solved).to_string());
        r.push(self.mpc_iterations.to_string());
        r.push(self.mpc_kkt.to_string());
        r.push(status_name(self.mpc_status).to_string());
        r
    }

    fn from_row(row: &csv::StringRecord, line: usize) -> Result<Self, SimError> {
        let err = |m: String| SimError::Format(format!("line {line}: {m}"));
        let mut it = row.iter();
        let mut next = || it.next().ok_or_else(|| err("too few columns".into()));
        let mut num = || -> Result<f64, SimError> {
            let s = next()?;
            s.parse::<f64>().map_err(|e| err(format!("{s:?}: {e}")))
        };
        let time = num()?;
        let phi = num()?;
        let base = |num: &mut dyn FnMut() -> Result<f64, SimError>| -> Result<BodyState, SimError> {
            let position = Vec3::new(num()?, num()?, num()?);
            let mut m = Mat3::zeros();
            for r in 0..3 {
                for c in 0..3 {
                    m[(r, c)] = num()?;
                }
            }
            let velocity = Vec3::new(num()?, num()?, num()?);
            let angular_velocity = Vec3::new(num()?, num()?, num()?);
            Ok(BodyState { position, rotation: Rot3::from_matrix_unchecked(m), velocity, angular_velocity })
        };
        let base_state = base(&mut num)?;
        let arr16 = |num: &mut dyn FnMut() -> Result<f64, SimError>| -> Result<[f64; N_JOINTS], SimError> {
            let mut a = [0.0; N_JOINTS];
            for v in a.iter_mut() {
                *v = num()?;
            }
            Ok(a)
        };
        let joint_angle = arr16(&mut num)?;
        let joint_velocity = arr16(&mut num)?;
        let joint_torque = arr16(&mut num)?;
        let mut foot_force = [Vec3::zeros(); N_LEGS];
        for f in foot_force.iter_mut() {
            *f = Vec3::new(num()?, num()?, num()?);
        }
        let mut contact = [false; N_LEGS];
        for c in contact.iter_mut() {
            *c = num()? != 0.0;
        }
        let power = arr16(&mut num)?;
        let ref_base = base(&mut num)?;
        let mut spine_target = [0.0; N_SPINE];
        for v in spine_target.iter_mut() {
            *v = num()?;
        }
        let mpc_solved = num()? != 0.0;
        let mpc_iterations = num()? as usize;
        let mpc_kkt = num()?;
        drop(num);
        let mpc_status = parse_status(next()?)?;
        Ok(LogRecord {
            time,
            phi,
            base: base_state,
            joint_angle,
            joint_velocity,
            joint_torque,
            foot_force,
            contact,
            power,
            ref_base,
            spine_target,
            mpc_solved,
            mpc_iterations,
            mpc_kkt,
            mpc_status,
        })
    }
}

impl SimLog {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), SimError> {
        let meta = serde_json::to_string(&MetaLine { meta: &self.meta, stop: self.stop })
            .map_err(|e| SimError::Format(e.to_string()))?;
        writeln!(w, "# {meta}")?;
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| SimError::Format(e.to_string());
        wr.write_record(csv_header()).map_err(io)?;
        for r in &self.records {
            wr.write_record(r.to_row()).map_err(io)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<SimLog, SimError> {
        let mut reader = BufReader::new(r);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let json = first
            .trim_end()
            .strip_prefix("# ")
            .ok_or_else(|| SimError::Format("missing metadata line".into()))?;
        let owned: MetaLineOwned = serde_json::from_str(json).map_err(|e| SimError::Format(format!("metadata: {e}")))?;
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rd.headers().map_err(|e| SimError::Format(e.to_string()))?.clone();
        if header.iter().ne(csv_header().iter().map(String::as_str)) {
            return Err(SimError::Format("unexpected column layout".into()));
        }
        let mut records = Vec::new();
        for (i, row) in rd.records().enumerate() {
            let row = row.map_err(|e| SimError::Format(e.to_string()))?;
            records.push(LogRecord::from_row(&row, i + 3)?);
        }
        Ok(SimLog { meta: owned.meta, records, stop: owned.stop, mpc_wall_time: Vec::new() })
    }

    pub fn duration(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.time)
    }

    /// Records inside the steady-state window.
    pub fn steady(&self) -> &[LogRecord] {
        let start = self.meta.steady_start;
        let i = self.records.partition_point(|r| r.time < start);
        &self.records[i..]
    }
}

#[derive(Serialize)]
struct MetaLine<'a> {
    meta: &'a LogMeta,
    stop: StopReason,
}

#[derive(Deserialize)]
struct MetaLineOwned {
    meta: LogMeta,
    stop: StopReason,
}

/// Headline numbers of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub gait: String,
    pub strategy: StrategyId,
    pub command: VelocityCommand,
    pub duration: f64,
    pub steps: usize,
    pub stable: bool,
    pub stop: StopReason,
    pub mean_speed: f64,
    pub mean_power: f64,
    pub mean_spine_power: f64,
    /// Absent when the robot barely moved.
    pub cot: Option<f64>,
    pub cot_without_spine: Option<f64>,
    pub mean_normal_force_ratio: f64,
    pub base_drift: f64,
    pub degraded_solves: usize,
    pub stale_solves: usize,
}
