//! Closed-loop controller: CPG phase, spine strategy, swing trajectories,
//! stance forces from the MPC and their mapping to joint torques.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dynamics::{generalized_velocity, point_jacobian, rotation_jacobian};
use super::log::{LogMeta, LogRecord, SimLog, StopReason};
use super::{stance_torques, SimConfig, SimError, SimState, Simulator, StepInput};
use crate::gait::{cpg_phase, leg_phase, swing_target, touchdown_point, GaitSchedule, SwingCurve};
use crate::lie::{Mat3, Rot3, Vec3};
use crate::model::{BodyId, BodyState, JointState, Kinematics, Leg, RobotModel, N_JOINTS, N_LEGS, N_SPINE};
use crate::mpc::{Mpc, MpcConfig, MpcInput, MpcOutput, PlanStep, SolveStatus, VelocityCommand};
use crate::spine::{self, StrategyId, StrategyParams};

/// Joint-space PD gains for swing legs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwingGains {
    pub kp: f64,
    pub kd: f64,
}

impl Default for SwingGains {
    fn default() -> Self {
        Self { kp: 20.0, kd: 0.5 }
    }
}

/// What one episode runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub gait: GaitSchedule,
    pub strategy: StrategyParams,
    pub command: VelocityCommand,
    pub swing: SwingGains,
    pub seed: u64,
    /// Standard deviation of a random initial base velocity, m/s.
    pub initial_velocity_noise: f64,
    /// Settling time added after the command ramp before steady state, s.
    pub settle_time: f64,
}

impl Experiment {
    pub fn new(gait: GaitSchedule, strategy: StrategyParams, command: VelocityCommand) -> Self {
        Self {
            gait,
            strategy,
            command,
            swing: SwingGains::default(),
            seed: 0,
            initial_velocity_noise: 0.0,
            settle_time: 1.0,
        }
    }

    pub fn ramp_time(&self, mpc: &MpcConfig) -> f64 {
        let c = &self.command;
        (c.vx.abs().max(c.vy.abs()) / mpc.linear_accel).max(c.yaw_rate.abs() / mpc.yaw_accel)
    }
}

/// Desired swing-foot position and velocity, world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingTarget {
    pub position: Vec3,
    pub velocity: Vec3,
}

/// Joint PD toward the IK solution of each swing target. Legs without a
/// target get zero torque. Unreachable targets are pulled toward the hip
/// until reachable and flagged.
pub fn apply_swing_pd(
    model: &RobotModel,
    kin: &Kinematics,
    base: &BodyState,
    joints: &JointState,
    targets: &[Option<SwingTarget>; N_LEGS],
    gains: &SwingGains,
) -> ([f64; N_JOINTS], [bool; N_LEGS]) {
    let mut tau = [0.0; N_JOINTS];
    let mut projected = [false; N_LEGS];
    let nu = generalized_velocity(base, joints);
    for leg in Leg::ALL {
        let Some(target) = targets[leg.index()] else { continue };
        let hip = kin.hip_pose(model, leg);
        let mut q = None;
        for k in 0..=20 {
            let scale = 1.0 - 0.05 * k as f64;
            let p = hip.translation + (target.position - hip.translation) * scale;
            if let Ok(sol) = model.leg_ik(&hip, &p, leg) {
                q = Some(sol);
                projected[leg.index()] = k > 0;
                break;
            }
        }
        let Some(q) = q else {
            projected[leg.index()] = true;
            continue;
        };
        // Joint rates that move the foot with the target relative to the
        // moving hip.
        let foot = kin.foot_position(model, leg);
        let body_v = point_jacobian(model, kin, base, model.foot_link(leg), &foot) * nu;
        let jl = kin.leg_jacobian(model, leg);
        let qd = jl.try_inverse().map_or(Vec3::zeros(), |inv| inv * (target.velocity - body_v));
        let i0 = leg.joint_index(0);
        for k in 0..3 {
            tau[i0 + k] = gains.kp * (q[k] - joints.angle[i0 + k]) + gains.kd * (qd[k] - joints.velocity[i0 + k]);
        }
    }
    (tau, projected)
}

/// Output of one control tick, held until the next.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlTick {
    pub torque: [f64; N_JOINTS],
    pub stance: [bool; N_LEGS],
    pub reference: BodyState,
    pub spine_target: [f64; N_SPINE],
    pub mpc: MpcOutput,
}

#[derive(Debug, Clone)]
pub struct Controller {
    model: RobotModel,
    schedule: GaitSchedule,
    curve: SwingCurve,
    strategy: StrategyParams,
    command: VelocityCommand,
    gains: SwingGains,
    mpc: Mpc,
    gravity: f64,
    ground_height: f64,
    tick_dt: f64,
    com_height: f64,
    /// Desired COM x, y and heading integrated from the ramped command.
    desired: (f64, f64, f64),
    liftoff: [Vec3; N_LEGS],
    was_stance: [bool; N_LEGS],
}

/// Leash on the desired pose, m and rad.
const LEASH_POSITION: f64 = 0.05;
const LEASH_YAW: f64 = 0.2;

fn wrap_angle(a: f64) -> f64 {
    (a + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI
}

impl Controller {
    pub fn new(
        model: RobotModel,
        experiment: &Experiment,
        mpc_config: MpcConfig,
        sim_config: &SimConfig,
        start: &SimState,
    ) -> Result<Self, SimError> {
        experiment.gait.validate()?;
        experiment
            .strategy
            .validate()
            .map_err(|source| SimError::Spine { time: 0.0, source })?;
        let mpc = Mpc::new(mpc_config).map_err(|source| SimError::Mpc { time: 0.0, source })?;
        let kin = Kinematics::compute(&model, &start.base, &start.joints);
        let com = kin.com(&model);
        let feet = Leg::ALL.map(|l| kin.foot_position(&model, l));
        Ok(Self {
            curve: SwingCurve::symmetric(experiment.gait.lift_height),
            schedule: experiment.gait.clone(),
            strategy: experiment.strategy.clone(),
            command: experiment.command,
            gains: experiment.swing,
            mpc,
            gravity: sim_config.gravity,
            ground_height: sim_config.ground_height,
            tick_dt: sim_config.dt * sim_config.control_divisor as f64,
            com_height: com.z,
            desired: (com.x, com.y, start.base.rotation.yaw()),
            liftoff: feet,
            was_stance: start.anchored,
            model,
        })
    }

    fn stance_at(&self, t: f64, leg: Leg) -> bool {
        let phi = cpg_phase(t, &self.schedule);
        self.schedule.in_stance(leg_phase(phi, leg, &self.schedule))
    }

    pub fn tick(&mut self, state: &SimState) -> Result<ControlTick, SimError> {
        let model = &self.model;
        let t = state.time;
        let kin = Kinematics::compute(model, &state.base, &state.joints);
        let phi = cpg_phase(t, &self.schedule);
        let stance = Leg::ALL.map(|l| self.stance_at(t, l));
        let feet_now = Leg::ALL.map(|l| kin.foot_position(model, l));
        for leg in Leg::ALL {
            let i = leg.index();
            if self.was_stance[i] && !stance[i] {
                self.liftoff[i] = feet_now[i];
            }
        }
        self.was_stance = stance;

        let lumped = lumped_body(model, &kin, &state.base, &state.joints);
        let com = lumped.position;
        let mass = model.total_mass();

        // Desired pose follows the ramped command, leashed to the robot.
        let cmd = self.mpc.ramped_command();
        let (mut xd, mut yd, mut yawd) = self.desired;
        let (s, c) = yawd.sin_cos();
        xd += (c * cmd.vx - s * cmd.vy) * self.tick_dt;
        yd += (s * cmd.vx + c * cmd.vy) * self.tick_dt;
        yawd += cmd.yaw_rate * self.tick_dt;
        let dx = xd - com.x;
        let dy = yd - com.y;
        let dist = dx.hypot(dy);
        if dist > LEASH_POSITION {
            xd = com.x + dx * LEASH_POSITION / dist;
            yd = com.y + dy * LEASH_POSITION / dist;
        }
        let yaw = lumped.rotation.yaw();
        let dyaw = wrap_angle(yawd - yaw).clamp(-LEASH_YAW, LEASH_YAW);
        yawd = yaw + dyaw;
        self.desired = (xd, yd, yawd);
        let (s, c) = yawd.sin_cos();
        let reference_start = BodyState {
            position: Vec3::new(xd, yd, self.com_height),
            rotation: Rot3::rot_z(yawd),
            velocity: Vec3::new(c * cmd.vx - s * cmd.vy, s * cmd.vx + c * cmd.vy, 0.0),
            angular_velocity: Vec3::new(0.0, 0.0, cmd.yaw_rate),
        };

        // Contact plan over the horizon.
        let cfg = self.mpc.config.clone();
        let (sy, cy) = yaw.sin_cos();
        let v_cmd_world = Vec3::new(cy * cmd.vx - sy * cmd.vy, sy * cmd.vx + cy * cmd.vy, 0.0);
        let neutral = Leg::ALL.map(|l| model.neutral_foot(l));
        let current_anchor = Leg::ALL.map(|l| {
            let i = l.index();
            if state.anchored[i] {
                state.anchor[i]
            } else {
                Vec3::new(feet_now[i].x, feet_now[i].y, self.ground_height)
            }
        });
        let mut plan = Vec::with_capacity(cfg.horizon);
        let mut pos = current_anchor;
        let mut prev = stance;
        for k in 0..cfg.horizon {
            let tk = t + k as f64 * cfg.dt;
            let contact = if k == 0 { stance } else { Leg::ALL.map(|l| self.stance_at(tk, l)) };
            for leg in Leg::ALL {
                let i = leg.index();
                if contact[i] && !prev[i] {
                    pos[i] = touchdown_point(
                        &state.base.position,
                        yaw,
                        &neutral[i],
                        &v_cmd_world,
                        cmd.yaw_rate,
                        k as f64 * cfg.dt,
                        self.schedule.t_stance,
                    );
                }
            }
            prev = contact;
            plan.push(PlanStep { feet: pos, contact });
        }
        let input = MpcInput {
            state: lumped,
            inertia: kin.composite_inertia(model),
            mass,
            plan,
            reference_start,
            height: self.com_height,
            command: self.command,
        };
        let mpc_out = self.mpc.step(&input, self.tick_dt).map_err(|source| SimError::Mpc { time: t, source })?;

        // Joint torques.
        let mut torque = [0.0; N_JOINTS];
        let mut targets = [None; N_LEGS];
        let remaining = |leg: Leg| (1.0 - leg_phase(phi, leg, &self.schedule)) * self.schedule.t_cycle();
        for leg in Leg::ALL {
            let i = leg.index();
            if stance[i] {
                let tau = stance_torques(model, &kin, leg, &mpc_out.forces[i]);
                torque[leg.joint_index(0)..leg.joint_index(0) + 3].copy_from_slice(tau.as_slice());
            } else {
                let td = touchdown_point(
                    &state.base.position,
                    yaw,
                    &neutral[i],
                    &v_cmd_world,
                    cmd.yaw_rate,
                    remaining(leg),
                    self.schedule.t_stance,
                );
                let (p, v) = swing_target(leg_phase(phi, leg, &self.schedule), &self.schedule, &self.curve, &self.liftoff[i], &td)?;
                targets[i] = Some(SwingTarget { position: p, velocity: v });
            }
        }
        let (swing_tau, _) = apply_swing_pd(model, &kin, &state.base, &state.joints, &targets, &self.gains);
        for leg in Leg::ALL {
            if !stance[leg.index()] {
                let i0 = leg.joint_index(0);
                torque[i0..i0 + 3].copy_from_slice(&swing_tau[i0..i0 + 3]);
            }
        }

        let mut spine_target = [0.0; N_SPINE];
        if self.strategy.strategy != StrategyId::Fixed {
            let inv = state.base.rotation.transpose();
            let feet_body = feet_now.map(|p| inv * (p - state.base.position));
            let mut cmd = spine::command(phi, &self.strategy, &feet_body, &neutral)
                .map_err(|source| SimError::Spine { time: t, source })?;
            cmd.tau_ff = model.spine_feedforward_torque(&kin, self.gravity, &mpc_out.forces);
            let spine_angle = state.joints.spine_angles();
            let spine_vel = [state.joints.velocity[0], state.joints.velocity[1], state.joints.velocity[2], state.joints.velocity[3]];
            let tau = cmd.torque(&spine_angle, &spine_vel);
            torque[..N_SPINE].copy_from_slice(&tau);
            spine_target = cmd.theta_d;
        }
        for (j, tau) in torque.iter_mut().enumerate() {
            *tau = model.clamp_actuator(j, *tau, state.joints.velocity[j]);
        }

        // Reference expressed for the middle-body origin.
        let mut reference = reference_start;
        reference.position += state.base.position - com;
        Ok(ControlTick { torque, stance, reference, spine_target, mpc: mpc_out })
    }
}

/// The robot seen as one rigid body: COM position and velocity, the
/// mass-weighted mean orientation of the three bodies and the angular
/// velocity that carries the centroidal angular momentum. Unlike the middle
/// body's own rates these barely respond to internal spine motion.
pub fn lumped_body(model: &RobotModel, kin: &Kinematics, base: &BodyState, joints: &JointState) -> BodyState {
    let nu = generalized_velocity(base, joints);
    let com = kin.com(model);
    let mass = model.total_mass();
    let mut vcom = Vec3::zeros();
    let mut rsum = Mat3::zeros();
    let mut parts = Vec::with_capacity(3);
    for b in BodyId::ALL {
        let link = model.body_link(b);
        let body = model.body(b);
        let c = kin.body_com(model, b);
        let v = point_jacobian(model, kin, base, link, &c) * nu;
        let w = rotation_jacobian(model, kin, link) * nu;
        let r = kin.poses[link].rotation;
        vcom += v * body.mass;
        rsum += r * body.mass;
        parts.push((c, v, w, r * body.inertia * r.transpose(), body.mass));
    }
    vcom /= mass;
    let mut momentum = Vec3::zeros();
    for (c, v, w, inertia, m) in parts {
        momentum += (c - com).cross(&((v - vcom) * m)) + inertia * w;
    }
    let omega = kin
        .composite_inertia(model)
        .try_inverse()
        .map(|inv| inv * momentum)
        .unwrap_or(base.angular_velocity);
    BodyState { position: com, rotation: Rot3::nearest(&rsum), velocity: vcom, angular_velocity: omega }
}

/// Runs one episode from the standing pose.
pub fn run_episode(
    model: &RobotModel,
    sim_config: &SimConfig,
    experiment: &Experiment,
    mpc_config: &MpcConfig,
) -> Result<SimLog, SimError> {
    let sim = Simulator::new(model.clone(), sim_config.clone())?;
    let mut state = SimState::standing(model, sim_config.ground_height);
    if experiment.initial_velocity_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(experiment.seed);
        let sd = experiment.initial_velocity_noise;
        // Sum of uniforms: a cheap, deterministic bell-shaped draw.
        let mut draw = || (0..12).map(|_| rng.random_range(-0.5..0.5)).sum::<f64>() * sd;
        state.base.velocity += Vec3::new(draw(), draw(), 0.0);
    }
    let mut controller = Controller::new(model.clone(), experiment, mpc_config.clone(), sim_config, &state)?;
    let lock_spine = experiment.strategy.strategy == StrategyId::Fixed;

    let meta = LogMeta {
        dt: sim_config.dt,
        control_divisor: sim_config.control_divisor,
        mass: model.total_mass(),
        gravity: sim_config.gravity,
        nominal_height: model.nominal_height,
        gait: experiment.gait.clone(),
        strategy: experiment.strategy.strategy,
        command: experiment.command,
        steady_start: experiment.ramp_time(mpc_config) + experiment.settle_time,
        seed: experiment.seed,
    };
    let steps = sim_config.steps();
    let mut records = Vec::with_capacity(steps);
    let mut wall = Vec::with_capacity(steps / sim_config.control_divisor + 1);
    let mut stop = StopReason::Completed;
    let mut held: Option<ControlTick> = None;
    for n in 0..steps {
        let solved = n % sim_config.control_divisor == 0;
        if solved {
            let tick = controller.tick(&state)?;
            wall.push(tick.mpc.solve_time);
            held = Some(tick);
        }
        let tick = held.expect("first step is a control tick");
        let input = StepInput { torque: tick.torque, stance: tick.stance, lock_spine };
        let (next, report) = sim.step(&state, &input)?;
        // Time from the step count so that timestamps are exact multiples.
        let time = (n + 1) as f64 * sim_config.dt;
        records.push(LogRecord {
            time,
            phi: cpg_phase(time, &experiment.gait),
            base: next.base,
            joint_angle: next.joints.angle,
            joint_velocity: next.joints.velocity,
            joint_torque: next.joints.torque,
            foot_force: report.foot_force,
            contact: report.contact,
            power: report.power,
            ref_base: tick.reference,
            spine_target: tick.spine_target,
            mpc_solved: solved,
            mpc_iterations: tick.mpc.iterations,
            mpc_kkt: tick.mpc.kkt_residual,
            mpc_status: tick.mpc.status,
        });
        state = next;
        state.time = time;
        let m = state.base.rotation.matrix();
        let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
        let roll = m[(2, 1)].atan2(m[(2, 2)]);
        if roll.abs() > sim_config.max_tilt || pitch.abs() > sim_config.max_tilt {
            stop = StopReason::Tilted;
            break;
        }
        if state.base.position.z - sim_config.ground_height < sim_config.min_height_fraction * model.nominal_height {
            stop = StopReason::Collapsed;
            break;
        }
    }
    Ok(SimLog { meta, records, stop, mpc_wall_time: wall })
}

/// Number of control ticks that ended with `status`.
pub fn count_status(log: &SimLog, status: SolveStatus) -> usize {
    log.records.iter().filter(|r| r.mpc_solved && r.mpc_status == status).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::exp_so3;

    #[test]
    fn lumped_body_of_rigid_motion_matches_base() {
        let model = RobotModel::default();
        let mut base = BodyState::at_rest(Vec3::new(0.0, 0.0, 0.2));
        base.rotation = exp_so3(&Vec3::new(0.1, -0.05, 0.3));
        base.velocity = Vec3::new(0.2, 0.1, -0.1);
        base.angular_velocity = Vec3::new(0.4, -0.3, 0.8);
        let joints = model.standing_joints();
        let kin = Kinematics::compute(&model, &base, &joints);
        let l = lumped_body(&model, &kin, &base, &joints);
        assert!((l.angular_velocity - base.angular_velocity).norm() < 1e-12);
        assert!((l.rotation.matrix() - base.rotation.matrix()).norm() < 1e-12);
        assert!((l.position - kin.com(&model)).norm() < 1e-15);
        // v_com = v + ω × (c − origin) for a rigid body.
        let expected = base.velocity + base.angular_velocity.cross(&(l.position - base.position));
        assert!((l.velocity - expected).norm() < 1e-12);
    }

    #[test]
    fn lumped_rate_ignores_momentum_free_spine_motion() {
        // Spine rates with the base rates chosen to cancel the angular
        // momentum leave the lumped angular velocity at zero.
        let model = RobotModel::default();
        let base = BodyState::at_rest(Vec3::new(0.0, 0.0, 0.2));
        let mut joints = model.standing_joints();
        joints.velocity[0] = 0.7;
        joints.velocity[2] = -0.4;
        let kin = Kinematics::compute(&model, &base, &joints);
        let with_spine = lumped_body(&model, &kin, &base, &joints);
        let mut counter = base;
        let ic = kin.composite_inertia(&model);
        counter.angular_velocity = -ic.try_inverse().unwrap() * (ic * with_spine.angular_velocity);
        let l = lumped_body(&model, &kin, &counter, &joints);
        assert!(l.angular_velocity.norm() < 1e-12, "{:?}", l.angular_velocity);
    }

    #[test]
    fn swing_pd_is_zero_on_target_and_flags_unreachable() {
        let model = RobotModel::default();
        let base = BodyState::at_rest(Vec3::new(0.0, 0.0, model.nominal_height));
        let joints = model.standing_joints();
        let kin = Kinematics::compute(&model, &base, &joints);
        let foot = kin.foot_position(&model, Leg::FrontLeft);
        let mut targets = [None; N_LEGS];
        targets[0] = Some(SwingTarget { position: foot, velocity: Vec3::zeros() });
        targets[3] = Some(SwingTarget { position: foot + Vec3::new(0.0, 0.0, -5.0), velocity: Vec3::zeros() });
        let (tau, projected) = apply_swing_pd(&model, &kin, &base, &joints, &targets, &SwingGains::default());
        assert!(tau[4..7].iter().all(|t| t.abs() < 1e-9));
        assert_eq!(projected, [false, false, false, true]);
        assert_eq!(tau[7..13], [0.0; 6]);
    }

    #[test]
    fn ramp_time_uses_slowest_axis() {
        let mut e = Experiment::new(GaitSchedule::walk(), StrategyParams::fixed(), VelocityCommand::new(0.3, 0.0, 0.5));
        let cfg = MpcConfig::default();
        assert!((e.ramp_time(&cfg) - 0.6).abs() < 1e-12);
        e.command = VelocityCommand::new(0.0, 0.0, 0.0);
        assert_eq!(e.ramp_time(&cfg), 0.0);
    }
}
