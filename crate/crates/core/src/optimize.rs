//! Grid search over spine strategy constants.
//!
//! A [`ParamGrid`] names the constants to vary. An axis named `c1`..`c4` or
//! `cycles` sets that constant on all four spine joints; `fy.c3` style
//! names set it on one joint. Constants not on an axis keep the value from
//! the base parameters.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gait::{GaitId, GaitSchedule};
use crate::metrics::{strategy_cost_with, summarize, CostOptions, CostWeights};
use crate::model::{RobotModel, SpineJoint};
use crate::mpc::{MpcConfig, VelocityCommand};
use crate::sim::{run_episode, EpisodeSummary, Experiment, SimConfig, StopReason};
use crate::spine::{JointParams, PresetEntry, PresetLibrary, StrategyId, StrategyParams};

pub const DEFAULT_MAX_CANDIDATES: usize = 10_000;

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("candidate is unstable and cannot be exported")]
    UnstableCandidate,
    #[error("candidate is for {found}, not {expected}")]
    StrategyMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn new(name: &str, min: f64, max: f64, steps: usize) -> Self {
        Self { name: name.to_string(), min, max, steps }
    }

    /// Evenly spaced values from `min` to `max`, both included.
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| if i + 1 == self.steps { self.max } else { self.min + (self.max - self.min) * i as f64 / last })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    C1,
    C2,
    C3,
    C4,
    Cycles,
}

/// Joints an axis touches and which constant it sets.
fn parse_axis_name(name: &str) -> Option<(Vec<usize>, Field)> {
    let (joints, field) = match name.split_once('.') {
        Some((j, f)) => (vec![SpineJoint::ALL.iter().position(|s| s.name() == j)?], f),
        None => ((0..SpineJoint::ALL.len()).collect(), name),
    };
    let field = match field {
        "c1" => Field::C1,
        "c2" => Field::C2,
        "c3" => Field::C3,
        "c4" => Field::C4,
        "cycles" => Field::Cycles,
        _ => return None,
    };
    Some((joints, field))
}

fn set(p: &mut JointParams, field: Field, v: f64) {
    match field {
        Field::C1 => p.c1 = v,
        Field::C2 => p.c2 = v,
        Field::C3 => p.c3 = v,
        Field::C4 => p.c4 = v,
        Field::Cycles => p.cycles = v,
    }
}

fn default_cap() -> usize {
    DEFAULT_MAX_CANDIDATES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamGrid {
    pub strategy: StrategyId,
    pub gait: GaitId,
    #[serde(rename = "axis", default)]
    pub axes: Vec<Axis>,
    #[serde(default = "default_cap")]
    pub max_candidates: usize,
}

impl ParamGrid {
    pub fn new(strategy: StrategyId, gait: GaitId, axes: Vec<Axis>) -> Self {
        Self { strategy, gait, axes, max_candidates: DEFAULT_MAX_CANDIDATES }
    }

    /// Number of lattice points, saturating on overflow.
    pub fn cardinality(&self) -> usize {
        self.axes.iter().fold(1usize, |n, a| n.saturating_mul(a.steps))
    }

    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |m: String| Err(OptimizeError::InvalidGrid(m));
        if self.strategy == StrategyId::Fixed {
            return bad("the fixed strategy has no constants to search".into());
        }
        for (i, a) in self.axes.iter().enumerate() {
            if parse_axis_name(&a.name).is_none() {
                return bad(format!("unknown constant {:?}", a.name));
            }
            if self.axes[..i].iter().any(|b| b.name == a.name) {
                return bad(format!("constant {:?} appears twice", a.name));
            }
            if a.steps < 1 {
                return bad(format!("{}: steps must be at least 1", a.name));
            }
            if !(a.min.is_finite() && a.max.is_finite() && a.min <= a.max) {
                return bad(format!("{}: need finite min <= max", a.name));
            }
        }
        let n = self.cardinality();
        if n > self.max_candidates {
            return bad(format!("{n} candidates exceeds the cap of {}", self.max_candidates));
        }
        Ok(())
    }

    /// Lattice points in lexicographic order, first axis slowest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let values: Vec<Vec<f64>> = self.axes.iter().map(Axis::values).collect();
        let mut out = vec![vec![]];
        for vs in &values {
            out = out.into_iter().flat_map(|p| vs.iter().map(move |&v| [p.as_slice(), &[v]].concat())).collect();
        }
        out
    }

    /// `base` with the axis constants replaced by `values`.
    pub fn apply(&self, base: &StrategyParams, values: &[f64]) -> StrategyParams {
        let mut p = StrategyParams { strategy: self.strategy, joints: base.joints };
        for (a, &v) in self.axes.iter().zip(values) {
            let (joints, field) = parse_axis_name(&a.name).expect("validated axis name");
            for j in joints {
                set(&mut p.joints[j], field, v);
            }
        }
        p
    }
}

/// Outcome of evaluating one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// `f64::INFINITY` when the run was unstable or failed.
    pub cost: f64,
    pub summary: Option<EpisodeSummary>,
    pub error: Option<String>,
}

impl Evaluation {
    pub fn failed(error: impl Into<String>) -> Self {
        Self { cost: f64::INFINITY, summary: None, error: Some(error.into()) }
    }
}

pub trait Evaluator: Sync {
    fn evaluate(&self, params: &StrategyParams) -> Evaluation;
}

impl<F: Fn(&StrategyParams) -> Evaluation + Sync> Evaluator for F {
    fn evaluate(&self, params: &StrategyParams) -> Evaluation {
        self(params)
    }
}

/// Runs a full episode per candidate and scores it with the strategy cost.
#[derive(Debug, Clone)]
pub struct EpisodeEvaluator {
    pub model: RobotModel,
    pub sim: SimConfig,
    pub mpc: MpcConfig,
    pub gait: GaitSchedule,
    pub command: VelocityCommand,
    pub weights: CostWeights,
    pub options: CostOptions,
    pub seed: u64,
}

impl EpisodeEvaluator {
    /// Default model and configs, the gait's default command and the cost
    /// weights of `strategy`.
    pub fn new(gait: GaitSchedule, strategy: StrategyId) -> Self {
        Self {
            model: RobotModel::default(),
            sim: SimConfig::default(),
            mpc: MpcConfig::default(),
            command: VelocityCommand::default_for(gait.id),
            gait,
            weights: CostWeights::for_strategy(strategy),
            options: CostOptions::default(),
            seed: 0,
        }
    }
}

impl Evaluator for EpisodeEvaluator {
    fn evaluate(&self, params: &StrategyParams) -> Evaluation {
        if let Err(e) = params.validate() {
            return Evaluation::failed(e.to_string());
        }
        let mut exp = Experiment::new(self.gait.clone(), params.clone(), self.command);
        exp.seed = self.seed;
        let log = match run_episode(&self.model, &self.sim, &exp, &self.mpc) {
            Ok(log) => log,
            Err(e) => return Evaluation::failed(e.to_string()),
        };
        let summary = summarize(&log).ok();
        if log.stop != StopReason::Completed {
            return Evaluation { cost: f64::INFINITY, summary, error: Some(format!("stopped: {:?}", log.stop)) };
        }
        match strategy_cost_with(&log, &self.weights, &self.options) {
            Ok(cost) if cost.is_finite() => Evaluation { cost, summary, error: None },
            Ok(cost) => Evaluation { cost: f64::INFINITY, summary, error: Some(format!("non-finite cost {cost}")) },
            Err(e) => Evaluation { cost: f64::INFINITY, summary, error: Some(e.to_string()) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Axis name and value, in grid axis order.
    pub assignment: Vec<(String, f64)>,
    pub params: StrategyParams,
    pub cost: f64,
    pub stable: bool,
    pub summary: Option<EpisodeSummary>,
    pub error: Option<String>,
}

fn lexicographic(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    a.cost.total_cmp(&b.cost).then_with(|| {
        a.assignment
            .iter()
            .zip(&b.assignment)
            .map(|(x, y)| x.1.total_cmp(&y.1))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    })
}

/// Evaluates every lattice point in parallel and returns the candidates
/// sorted by cost, ties broken by parameter values. Failed or unstable
/// candidates carry an infinite cost and sort last.
pub fn grid_search<E: Evaluator>(
    evaluator: &E,
    grid: &ParamGrid,
    base: &StrategyParams,
) -> Result<Vec<Candidate>, OptimizeError> {
    grid.validate()?;
    let mut out: Vec<Candidate> = grid
        .points()
        .into_par_iter()
        .map(|values| {
            let params = grid.apply(base, &values);
            let eval = evaluator.evaluate(&params);
            let stable = eval.cost.is_finite() && eval.error.is_none();
            Candidate {
                assignment: grid.axes.iter().map(|a| a.name.clone()).zip(values).collect(),
                params,
                cost: if stable { eval.cost } else { f64::INFINITY },
                stable,
                summary: eval.summary,
                error: eval.error,
            }
        })
        .collect();
    out.sort_by(lexicographic);
    Ok(out)
}

/// A one-entry preset library holding the candidate's constants under
/// `[strategy.gait]`.
pub fn export_preset(candidate: &Candidate, strategy: StrategyId, gait: &str) -> Result<PresetLibrary, OptimizeError> {
    if !candidate.stable {
        return Err(OptimizeError::UnstableCandidate);
    }
    if candidate.params.strategy != strategy {
        return Err(OptimizeError::StrategyMismatch {
            expected: strategy.name().into(),
            found: candidate.params.strategy.name().into(),
        });
    }
    let chosen: Vec<String> = candidate.assignment.iter().map(|(n, v)| format!("{n}={v}")).collect();
    let mut lib = PresetLibrary::default();
    lib.insert(
        strategy,
        gait,
        PresetEntry {
            joints: candidate.params.joints,
            note: Some(format!("grid search pick, cost {}: {}", candidate.cost, chosen.join(", "))),
        },
    );
    Ok(lib)
}

/// One row per candidate in rank order.
pub fn write_candidates_csv<W: Write>(candidates: &[Candidate], w: W) -> Result<(), OptimizeError> {
    let mut writer = csv::Writer::from_writer(w);
    let io = |e: csv::Error| OptimizeError::Io(std::io::Error::other(e));
    let names: Vec<&str> = candidates.first().map_or(vec![], |c| c.assignment.iter().map(|a| a.0.as_str()).collect());
    let mut header = vec!["rank"];
    header.extend(&names);
    header.extend(["cost", "stable", "mean_speed", "cot", "error"]);
    writer.write_record(&header).map_err(io)?;
    for (rank, c) in candidates.iter().enumerate() {
        let mut row = vec![(rank + 1).to_string()];
        row.extend(c.assignment.iter().map(|a| a.1.to_string()));
        row.push(c.cost.to_string());
        row.push(c.stable.to_string());
        row.push(c.summary.as_ref().map_or(String::new(), |s| s.mean_speed.to_string()));
        row.push(c.summary.as_ref().and_then(|s| s.cot).map_or(String::new(), |v| v.to_string()));
        row.push(c.error.clone().unwrap_or_default());
        writer.write_record(&row).map_err(io)?;
    }
    writer.flush()?;
    Ok(())
}
