use spinewalk::gait::GaitSchedule;
use spinewalk::model::RobotModel;
use spinewalk::mpc::{MpcConfig, SolveStatus, VelocityCommand};
use spinewalk::sim::{count_status, run_episode, Experiment, SimConfig, SimLog, StopReason};
use spinewalk::spine::{PresetLibrary, StrategyId, StrategyParams};

fn run(gait: GaitSchedule, strategy: StrategyParams, vx: f64, duration: f64) -> SimLog {
    let sim = SimConfig { duration, ..SimConfig::default() };
    let exp = Experiment::new(gait, strategy, VelocityCommand::new(vx, 0.0, 0.0));
    run_episode(&RobotModel::default(), &sim, &exp, &MpcConfig::default()).unwrap()
}

fn preset(strategy: StrategyId, gait: &str) -> StrategyParams {
    PresetLibrary::builtin().params(strategy, gait).unwrap()
}

fn steady_speed(log: &SimLog) -> f64 {
    let s = log.steady();
    let (a, b) = (s.first().unwrap(), s.last().unwrap());
    (b.base.position - a.base.position).xy().norm() / (b.time - a.time)
}

#[test]
fn standing_holds_weight_without_drifting() {
    let log = run(GaitSchedule::stand(), StrategyParams::fixed(), 0.0, 10.0);
    assert_eq!(log.stop, StopReason::Completed);
    let mg = log.meta.mass * log.meta.gravity;
    let window: Vec<_> = log.records.iter().filter(|r| r.time <= 5.0).collect();
    let mean = window.iter().map(|r| r.foot_force.iter().map(|f| f.z).sum::<f64>()).sum::<f64>() / window.len() as f64;
    assert!((mean - mg).abs() / mg < 0.01, "mean Σfz {mean} vs mg {mg}");
    let start = log.records[0].base.position;
    let drift = log.records.iter().map(|r| (r.base.position - start).norm()).fold(0.0, f64::max);
    assert!(drift < 0.05, "drift {drift}");
}

#[test]
fn torques_change_only_on_control_ticks() {
    let log = run(GaitSchedule::trot(), preset(StrategyId::TimeOpt, "trot"), 0.6, 2.0);
    assert_eq!(log.stop, StopReason::Completed);
    for (n, pair) in log.records.windows(2).enumerate() {
        let step = n + 1;
        assert_eq!(pair[1].mpc_solved, step % 2 == 0);
        if step % 2 == 1 {
            assert_eq!(pair[0].joint_torque, pair[1].joint_torque, "torque changed on odd step {step}");
        }
    }
}

#[test]
fn replays_are_bitwise_identical() {
    let sim = SimConfig { duration: 1.5, ..SimConfig::default() };
    let mut exp = Experiment::new(GaitSchedule::walk(), preset(StrategyId::FootTracking, "walk"), VelocityCommand::new(0.3, 0.0, 0.0));
    exp.seed = 11;
    exp.initial_velocity_noise = 0.01;
    let csv = |e: &Experiment| {
        let log = run_episode(&RobotModel::default(), &sim, e, &MpcConfig::default()).unwrap();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        buf
    };
    let a = csv(&exp);
    assert_eq!(a, csv(&exp));
    exp.seed = 12;
    assert_ne!(a, csv(&exp));
}

#[test]
fn fixed_spine_never_moves_or_draws_power() {
    let log = run(GaitSchedule::trot(), StrategyParams::fixed(), 0.6, 4.0);
    assert_eq!(log.stop, StopReason::Completed);
    for r in &log.records {
        assert_eq!(r.joint_angle[..4], [0.0; 4]);
        assert_eq!(r.joint_velocity[..4], [0.0; 4]);
        assert_eq!(r.power[..4], [0.0; 4]);
    }
}

#[test]
fn active_spine_walk_tracks_command() {
    let log = run(GaitSchedule::walk(), preset(StrategyId::Stiffness, "walk"), 0.3, 6.0);
    assert_eq!(log.stop, StopReason::Completed);
    let v = steady_speed(&log);
    assert!((v - 0.3).abs() < 0.045, "speed {v}");
    assert!(log.records.iter().any(|r| r.joint_angle[..4].iter().any(|a| a.abs() > 1e-3)));
    assert_eq!(count_status(&log, SolveStatus::Stale), 0);
}
