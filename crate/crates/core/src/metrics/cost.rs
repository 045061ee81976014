//! Weighted cost used to tune spine strategy constants.
//!
//! The cost is `Σ_k W_k · feature_k`, with features
//!
//! | k  | feature                                                   |
//! |----|-----------------------------------------------------------|
//! | 1  | mean ‖r_d − r‖                                            |
//! | 2  | mean ‖vee(log(R R_dᵀ))‖                                   |
//! | 3  | mean ‖v_d − v‖                                            |
//! | 4  | mean ‖ω_d − ω‖                                            |
//! | 5  | Σ over feet of the std. deviation of ‖f‖                  |
//! | 6  | same as 5                                                 |
//! | 7  | Σ over feet of mean ‖f‖                                   |
//! | 8  | Σ over feet of max ‖f‖                                    |
//! | 9  | Σ over spine joints of mean \|θ_d − θ\|                   |
//! | 10 | Σ over spine joints of max θ − min θ                      |
//! | 11 | mean summed electrical power                              |

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::lie::log_so3;
use crate::model::{N_JOINTS, N_LEGS, N_SPINE};
use crate::sim::{LogRecord, SimLog};
use crate::spine::StrategyId;

pub const N_WEIGHTS: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    pub w: [f64; N_WEIGHTS],
}

impl CostWeights {
    pub const STIFFNESS: CostWeights =
        CostWeights { w: [50.0, 50.0, 50.0, 10.0, 4.0, 4.0, 0.1, 1.0 / 800.0, 0.0, -2.0, 0.002] };
    pub const FOOT_TRACKING: CostWeights =
        CostWeights { w: [50.0, 50.0, 50.0, 10.0, 4.0, 4.0, 0.1, 1.0 / 800.0, 10.0, 0.0, 0.002] };
    pub const TIME_VARYING: CostWeights =
        CostWeights { w: [50.0, 50.0, 50.0, 10.0, 4.0, 4.0, 0.1, 1.0 / 800.0, 10.0, 0.0, 0.002] };

    /// Default row per strategy. The fixed spine has no row of its own and
    /// uses the time-varying one; its spine terms are zero anyway.
    pub fn for_strategy(strategy: StrategyId) -> CostWeights {
        match strategy {
            StrategyId::Stiffness => Self::STIFFNESS,
            StrategyId::FootTracking => Self::FOOT_TRACKING,
            StrategyId::TimeReal | StrategyId::TimeOpt | StrategyId::Fixed => Self::TIME_VARYING,
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        match self.w.iter().position(|w| !w.is_finite()) {
            Some(k) => Err(MetricsError::InvalidWeights(format!("W{} is not finite", k + 1))),
            None => Ok(()),
        }
    }
}

/// Records the averages run over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostWindow {
    /// From the end of the command ramp plus settling.
    #[default]
    SteadyState,
    /// Every record.
    Entire,
}

/// Joints summed in the power term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerTerm {
    #[default]
    AllJoints,
    SpineOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostOptions {
    pub window: CostWindow,
    pub power: PowerTerm,
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

/// The unweighted features, in weight order.
pub fn cost_features(log: &SimLog, options: &CostOptions) -> Result<[f64; N_WEIGHTS], MetricsError> {
    let recs: &[LogRecord] = match options.window {
        CostWindow::SteadyState => log.steady(),
        CostWindow::Entire => &log.records,
    };
    let n = recs.len();
    if n == 0 {
        return Err(MetricsError::EmptyWindow);
    }
    let mut f = [0.0; N_WEIGHTS];
    f[0] = mean(recs.iter().map(|r| (r.ref_base.position - r.base.position).norm()), n);
    let mut rot = 0.0;
    for r in recs {
        // Rotation errors of π have no unique log; their magnitude is π.
        rot += log_so3(&(r.base.rotation * r.ref_base.rotation.transpose())).map_or(std::f64::consts::PI, |w| w.norm());
    }
    f[1] = rot / n as f64;
    f[2] = mean(recs.iter().map(|r| (r.ref_base.velocity - r.base.velocity).norm()), n);
    f[3] = mean(recs.iter().map(|r| (r.ref_base.angular_velocity - r.base.angular_velocity).norm()), n);
    for leg in 0..N_LEGS {
        let mags: Vec<f64> = recs.iter().map(|r| r.foot_force[leg].norm()).collect();
        let m = mean(mags.iter().copied(), n);
        let sd = mean(mags.iter().map(|x| (x - m) * (x - m)), n).sqrt();
        f[4] += sd;
        f[5] += sd;
        f[6] += m;
        f[7] += mags.iter().copied().fold(0.0, f64::max);
    }
    for j in 0..N_SPINE {
        f[8] += mean(recs.iter().map(|r| (r.spine_target[j] - r.joint_angle[j]).abs()), n);
        let (lo, hi) = recs
            .iter()
            .map(|r| r.joint_angle[j])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(a), hi.max(a)));
        f[9] += hi - lo;
    }
    let joints = match options.power {
        PowerTerm::AllJoints => 0..N_JOINTS,
        PowerTerm::SpineOnly => 0..N_SPINE,
    };
    f[10] = mean(recs.iter().map(|r| r.power[joints.clone()].iter().sum::<f64>()), n);
    Ok(f)
}

/// Weighted cost with the default options.
pub fn strategy_cost(log: &SimLog, weights: &CostWeights) -> Result<f64, MetricsError> {
    strategy_cost_with(log, weights, &CostOptions::default())
}

pub fn strategy_cost_with(log: &SimLog, weights: &CostWeights, options: &CostOptions) -> Result<f64, MetricsError> {
    weights.validate()?;
    let f = cost_features(log, options)?;
    Ok(weights.w.iter().zip(&f).map(|(w, x)| w * x).sum())
}
