//! Episode metrics: cost of transport, footfall grids, the walk/trot
//! transition speed and the strategy tuning cost.

mod cost;
mod hildebrand;
mod transition;

use thiserror::Error;

use crate::model::N_SPINE;
use crate::mpc::SolveStatus;
use crate::sim::{count_status, EpisodeSummary, LogRecord, SimLog, StopReason};

pub use cost::{cost_features, strategy_cost, strategy_cost_with, CostOptions, CostWeights, CostWindow, PowerTerm, N_WEIGHTS};
pub use hildebrand::{footfall_consistency, hildebrand, HildebrandGrid, MIN_BINS};
pub use transition::{gait_transition, CotCurve, Transition};

/// Speeds below this are treated as standing still.
pub const MIN_SPEED: f64 = 0.01;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mean speed {0:.4} m/s is too small for a cost of transport")]
    ZeroVelocity(f64),
    #[error("no records in the averaging window")]
    EmptyWindow,
    #[error("log covers {cycles} full gait cycles, need at least 2")]
    TooShort { cycles: usize },
    #[error("at least {MIN_BINS} bins are required, got {0}")]
    TooFewBins(usize),
    #[error("bin {0} received no samples; use fewer bins")]
    EmptyBin(usize),
    #[error("grid shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("invalid CoT curve: {0}")]
    InvalidCurve(String),
    #[error("invalid cost weights: {0}")]
    InvalidWeights(String),
    #[error("curves do not cross in their common velocity range")]
    NoCrossing,
    #[error("curves cross {n} times: {0:?}", n = .0.len())]
    MultipleCrossings(Vec<f64>),
    #[error(transparent)]
    Gait(#[from] crate::gait::GaitError),
}

fn planar_speed(r: &LogRecord) -> f64 {
    r.base.velocity.xy().norm()
}

fn joint_power(r: &LogRecord, include_spine: bool) -> f64 {
    let skip = if include_spine { 0 } else { N_SPINE };
    r.power[skip..].iter().sum()
}

/// Mean planar speed and mean summed joint power over `records`.
fn speed_and_power(records: &[LogRecord], include_spine: bool) -> Result<(f64, f64), MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyWindow);
    }
    let n = records.len() as f64;
    let v = records.iter().map(planar_speed).sum::<f64>() / n;
    let p = records.iter().map(|r| joint_power(r, include_spine)).sum::<f64>() / n;
    Ok((v, p))
}

/// CoT = P̄ / (m g v̄) over the steady-state window, where P̄ is the mean
/// electrical power summed over joints (spine excluded on request) and v̄
/// the mean planar base speed.
pub fn cost_of_transport(log: &SimLog, include_spine: bool) -> Result<f64, MetricsError> {
    cot_over(log.steady(), log.meta.mass, log.meta.gravity, include_spine)
}

fn cot_over(records: &[LogRecord], mass: f64, gravity: f64, include_spine: bool) -> Result<f64, MetricsError> {
    let (v, p) = speed_and_power(records, include_spine)?;
    if !(v > MIN_SPEED) {
        return Err(MetricsError::ZeroVelocity(v));
    }
    Ok(p / (mass * gravity * v))
}

/// Headline numbers over the steady-state window. Stable means the episode
/// ran to completion.
pub fn summarize(log: &SimLog) -> Result<EpisodeSummary, MetricsError> {
    let steady = log.steady();
    let (mean_speed, mean_power) = speed_and_power(steady, true)?;
    let (_, leg_power) = speed_and_power(steady, false)?;
    let mg = log.meta.mass * log.meta.gravity;
    let n = steady.len() as f64;
    let normal = steady.iter().map(|r| r.foot_force.iter().map(|f| f.z).sum::<f64>()).sum::<f64>() / (n * mg);
    let base_drift = log
        .records
        .iter()
        .map(|r| (r.base.position - r.ref_base.position).xy().norm())
        .fold(0.0, f64::max);
    let cot = |include| cot_over(steady, log.meta.mass, log.meta.gravity, include).ok();
    Ok(EpisodeSummary {
        gait: log.meta.gait.id.name().to_string(),
        strategy: log.meta.strategy,
        command: log.meta.command,
        duration: log.duration(),
        steps: log.records.len(),
        stable: log.stop == StopReason::Completed,
        stop: log.stop,
        mean_speed,
        mean_power,
        mean_spine_power: mean_power - leg_power,
        cot: cot(true),
        cot_without_spine: cot(false),
        mean_normal_force_ratio: normal,
        base_drift,
        degraded_solves: count_status(log, SolveStatus::Degraded),
        stale_solves: count_status(log, SolveStatus::Stale),
    })
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use crate::gait::GaitSchedule;
    use crate::lie::Vec3;
    use crate::sim::LogRecord;
    use proptest::prelude::*;

    fn moving_log(power: impl Fn(f64) -> [f64; 16], speed: impl Fn(f64) -> f64, n: usize, dt: f64) -> SimLog {
        let mut log = gait_log(&GaitSchedule::walk(), 0.0, dt, 0.0);
        log.records = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                let mut r = LogRecord::blank(t, 0.0);
                r.power = power(t);
                r.base.velocity = Vec3::new(speed(t), 0.0, 0.0);
                r
            })
            .collect();
        log
    }

    fn split_power(total: f64, spine: f64) -> [f64; 16] {
        let mut p = [0.0; 16];
        p[0] = spine;
        p[5] = total - spine;
        p
    }

    #[test]
    fn cot_examples() {
        let log = moving_log(|_| split_power(5.0, 0.0), |_| 0.3, 200, 0.0025);
        let cot = cost_of_transport(&log, true).unwrap();
        assert!((cot - 5.0 / (4.0 * 9.81 * 0.3)).abs() < 1e-12);
        assert!((cot - 0.4248).abs() < 1e-4);
        assert_eq!(cot, cost_of_transport(&log, false).unwrap());

        let mgv = 4.0 * 9.81 * 0.3;
        let log = moving_log(|_| split_power(mgv, 0.0), |_| 0.3, 10, 0.0025);
        assert!((cost_of_transport(&log, true).unwrap() - 1.0).abs() < 1e-12);

        let log = moving_log(|_| split_power(5.0, 2.0), |_| 0.3, 10, 0.0025);
        let with = cost_of_transport(&log, true).unwrap();
        let without = cost_of_transport(&log, false).unwrap();
        assert!((with / without - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cot_rejects_standing_still_and_empty_window() {
        let log = moving_log(|_| split_power(5.0, 0.0), |_| 0.005, 10, 0.0025);
        assert!(matches!(cost_of_transport(&log, true), Err(MetricsError::ZeroVelocity(_))));
        let mut log = moving_log(|_| split_power(5.0, 0.0), |_| 0.3, 10, 0.0025);
        log.meta.steady_start = 1.0;
        assert!(matches!(cost_of_transport(&log, true), Err(MetricsError::EmptyWindow)));
    }

    #[test]
    fn cot_window_starts_at_steady_state() {
        let mut log = moving_log(|t| split_power(if t < 0.5 { 50.0 } else { 5.0 }, 0.0), |_| 0.3, 400, 0.0025);
        log.meta.steady_start = 0.5;
        assert!((cost_of_transport(&log, true).unwrap() - 5.0 / (4.0 * 9.81 * 0.3)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn cot_stable_under_subsampling(k in 2usize..6, phase in 0.0f64..std::f64::consts::TAU, amp in 0.0f64..4.0) {
            let dt = 0.0025;
            let p = move |t: f64| split_power(6.0 + amp * (2.0 * std::f64::consts::PI * 2.5 * t + phase).sin(), 0.0);
            let v = move |t: f64| 0.3 + 0.05 * (2.0 * std::f64::consts::PI * 2.5 * t).cos();
            let full = moving_log(p, v, 4000, dt);
            let mut sub = full.clone();
            sub.records = full.records.iter().step_by(k).copied().collect();
            let a = cost_of_transport(&full, true).unwrap();
            let b = cost_of_transport(&sub, true).unwrap();
            prop_assert!((a - b).abs() / a < 0.01);
        }
    }

    #[test]
    fn summary_of_synthetic_log() {
        let mut log = moving_log(|_| split_power(5.0, 1.0), |_| 0.3, 100, 0.0025);
        for r in &mut log.records {
            r.foot_force = [Vec3::new(0.0, 0.0, 4.0 * 9.81 / 4.0); 4];
            r.ref_base.position = Vec3::new(0.0, 0.02, 0.0);
        }
        let s = summarize(&log).unwrap();
        assert!((s.mean_power - 5.0).abs() < 1e-12);
        assert!((s.mean_spine_power - 1.0).abs() < 1e-12);
        assert!((s.mean_normal_force_ratio - 1.0).abs() < 1e-12);
        assert!((s.base_drift - 0.02).abs() < 1e-15);
        assert!(s.stable);
        assert!(s.cot.unwrap() > s.cot_without_spine.unwrap());
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<EpisodeSummary>(&json).unwrap(), s);
    }
}
