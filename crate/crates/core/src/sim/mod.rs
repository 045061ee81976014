//! Simplified physics: the three-body chain driven by gravity, spine torques
//! and ground forces transmitted through massless legs, plus the closed-loop
//! episode driver.

mod controller;
pub mod dynamics;
mod log;

pub use controller::{apply_swing_pd, count_status, run_episode, ControlTick, Controller, Experiment, SwingGains, SwingTarget};
pub use log::{EpisodeSummary, LogMeta, LogRecord, SimLog, StopReason};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gait::GaitError;
use crate::lie::{exp_so3, Vec3};
use crate::model::{joint_torques_from_force, BodyState, JointState, Kinematics, Leg, RobotModel, N_JOINTS, N_LEGS, N_SPINE};
use crate::mpc::MpcError;
use crate::spine::{SpineError, SPINE_LIMIT};
use dynamics::{generalized_velocity, mass_and_bias, point_jacobian, NDOF};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("numerical divergence at t = {time:.4} s")]
    NumericalDivergence { time: f64 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("MPC failure at t = {time:.4} s: {source}")]
    Mpc {
        time: f64,
        #[source]
        source: MpcError,
    },
    #[error("spine strategy failure at t = {time:.4} s: {source}")]
    Spine {
        time: f64,
        #[source]
        source: SpineError,
    },
    #[error(transparent)]
    Gait(#[from] GaitError),
    #[error("singular mass matrix at t = {time:.4} s")]
    SingularMassMatrix { time: f64 },
    #[error("log I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("log format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    /// Sim steps per control tick.
    pub control_divisor: usize,
    pub gravity: f64,
    pub ground_height: f64,
    pub mu: f64,
    /// Penalty contact for swing feet that reach the ground.
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    /// Episode length, s.
    pub duration: f64,
    /// Normal force above which a foot counts as in contact, N.
    pub contact_threshold: f64,
    /// Rotor-like inertia that lets massless swing legs integrate PD torques.
    pub swing_inertia: f64,
    /// Any state component above this magnitude is a divergence.
    pub divergence_limit: f64,
    /// Roll or pitch beyond this angle ends the episode as unstable, rad.
    pub max_tilt: f64,
    /// Base height below this fraction of nominal ends the episode as unstable.
    pub min_height_fraction: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.0025,
            control_divisor: 2,
            gravity: 9.81,
            ground_height: 0.0,
            mu: 1.0,
            contact_stiffness: 5000.0,
            contact_damping: 50.0,
            duration: 10.0,
            contact_threshold: 0.5,
            swing_inertia: 0.004,
            divergence_limit: 1e6,
            max_tilt: 0.5,
            min_height_fraction: 0.5,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if self.control_divisor < 1 {
            return bad("control divisor must be at least 1");
        }
        if !(self.mu > 0.0) || !(self.duration > 0.0) || !(self.swing_inertia > 0.0) {
            return bad("mu, duration and swing inertia must be positive");
        }
        if !(self.contact_stiffness >= 0.0 && self.contact_damping >= 0.0) {
            return bad("contact stiffness and damping must be non-negative");
        }
        if !self.gravity.is_finite() || !self.ground_height.is_finite() {
            return bad("gravity and ground height must be finite");
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// Full plant state. `base` describes the middle-body frame origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub base: BodyState,
    pub joints: JointState,
    /// Feet pinned to the ground at `anchor`.
    pub anchored: [bool; N_LEGS],
    pub anchor: [Vec3; N_LEGS],
    pub time: f64,
}

impl SimState {
    /// Standing at the nominal height with every foot anchored below its hip.
    pub fn standing(model: &RobotModel, ground_height: f64) -> Self {
        let base = BodyState::at_rest(Vec3::new(0.0, 0.0, model.nominal_height + ground_height));
        let joints = model.standing_joints();
        let kin = Kinematics::compute(model, &base, &joints);
        let anchor = Leg::ALL.map(|l| kin.foot_position(model, l));
        Self { base, joints, anchored: [true; N_LEGS], anchor, time: 0.0 }
    }
}

/// Actuator commands for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInput {
    /// Joint torques, already actuator-clamped.
    pub torque: [f64; N_JOINTS],
    /// Legs the controller wants on the ground.
    pub stance: [bool; N_LEGS],
    /// Freeze the spine at zero.
    pub lock_spine: bool,
}

/// Quantities resolved during a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Ground force on each foot, N, world frame.
    pub foot_force: [Vec3; N_LEGS],
    pub contact: [bool; N_LEGS],
    /// Electrical power per joint, W.
    pub power: [f64; N_JOINTS],
}

#[derive(Debug, Clone)]
pub struct Simulator {
    pub model: RobotModel,
    pub config: SimConfig,
}

/// Clamps `f_z ≥ 0`, then scales the tangential part onto the pyramid.
pub fn project_force(f: Vec3, mu: f64) -> Vec3 {
    let z = f.z.max(0.0);
    let lim = mu * z;
    let m = f.x.abs().max(f.y.abs());
    let s = if m > lim { lim / m } else { 1.0 };
    Vec3::new(f.x * s, f.y * s, z)
}

impl Simulator {
    pub fn new(model: RobotModel, config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        Ok(Self { model, config })
    }

    /// Advances one `dt`.
    pub fn step(&self, state: &SimState, input: &StepInput) -> Result<(SimState, StepReport), SimError> {
        let model = &self.model;
        let cfg = &self.config;
        let dt = cfg.dt;
        let mut s = *state;
        if input.lock_spine {
            for j in 0..N_SPINE {
                s.joints.angle[j] = 0.0;
                s.joints.velocity[j] = 0.0;
            }
        }

        // Contact bookkeeping and stance leg poses.
        let kin0 = Kinematics::compute(model, &s.base, &s.joints);
        for leg in Leg::ALL {
            let i = leg.index();
            if !input.stance[i] {
                s.anchored[i] = false;
                continue;
            }
            if !s.anchored[i] {
                let p = kin0.foot_position(model, leg);
                s.anchor[i] = Vec3::new(p.x, p.y, cfg.ground_height);
                s.anchored[i] = true;
            }
            match model.leg_ik(&kin0.hip_pose(model, leg), &s.anchor[i], leg) {
                Ok(q) => s.joints.set_leg_angles(leg, q),
                Err(_) => s.anchored[i] = false,
            }
        }
        let kin = Kinematics::compute(model, &s.base, &s.joints);
        let nu = generalized_velocity(&s.base, &s.joints);

        let mut torque = input.torque;
        if input.lock_spine {
            torque[..N_SPINE].fill(0.0);
        }
        let mut foot_force = [Vec3::zeros(); N_LEGS];
        for leg in Leg::ALL {
            let i = leg.index();
            let jl = kin.leg_jacobian(model, leg);
            let q0 = leg.joint_index(0);
            let tau = Vec3::new(torque[q0], torque[q0 + 1], torque[q0 + 2]);
            if s.anchored[i] {
                // Massless leg in equilibrium: τ = Jᵀ(−f).
                foot_force[i] = match jl.transpose().try_inverse() {
                    Some(jt_inv) => project_force(-(jt_inv * tau), cfg.mu),
                    None => Vec3::zeros(),
                };
            } else {
                let p = kin.foot_position(model, leg);
                let pen = cfg.ground_height - p.z;
                if pen > 0.0 {
                    let jp = point_jacobian(model, &kin, &s.base, model.foot_link(leg), &p);
                    let qd = Vec3::new(s.joints.velocity[q0], s.joints.velocity[q0 + 1], s.joints.velocity[q0 + 2]);
                    let vz = (jp * nu + jl * qd).z;
                    let fz = (cfg.contact_stiffness * pen - cfg.contact_damping * vz).max(0.0);
                    foot_force[i] = Vec3::new(0.0, 0.0, fz);
                }
            }
        }

        // Chain dynamics.
        let (m, mut h) = mass_and_bias(model, &kin, &s.base, &s.joints, cfg.gravity);
        for leg in Leg::ALL {
            let f = foot_force[leg.index()];
            if f != Vec3::zeros() {
                let p = kin.foot_position(model, leg);
                h += point_jacobian(model, &kin, &s.base, model.foot_link(leg), &p).transpose() * f;
            }
        }
        for j in 0..N_SPINE {
            h[6 + j] += torque[j];
        }
        let mut nu_dot = dynamics::Vec10::zeros();
        let ndof = if input.lock_spine { 6 } else { NDOF };
        {
            let mm = m.view((0, 0), (ndof, ndof)).clone_owned();
            let chol = mm.cholesky().ok_or(SimError::SingularMassMatrix { time: s.time })?;
            let sol = chol.solve(&h.rows(0, ndof).clone_owned());
            nu_dot.rows_mut(0, ndof).copy_from(&sol);
        }

        // Semi-implicit Euler.
        let nu_new = nu + nu_dot * dt;
        let mut next = s;
        next.base.velocity = nu_new.fixed_rows::<3>(0).into();
        next.base.angular_velocity = nu_new.fixed_rows::<3>(3).into();
        next.base.position = s.base.position + next.base.velocity * dt;
        next.base.rotation = (exp_so3(&(next.base.angular_velocity * dt)) * s.base.rotation).renormalize();
        if !input.lock_spine {
            for j in 0..N_SPINE {
                let mut v = nu_new[6 + j];
                let mut a = s.joints.angle[j] + v * dt;
                if a > SPINE_LIMIT {
                    a = SPINE_LIMIT;
                    v = v.min(0.0);
                } else if a < -SPINE_LIMIT {
                    a = -SPINE_LIMIT;
                    v = v.max(0.0);
                }
                next.joints.angle[j] = a;
                next.joints.velocity[j] = v;
            }
        }

        // Legs: stance angles follow the anchors, swing legs integrate their
        // torques against the virtual inertia.
        let kin_next = Kinematics::compute(model, &next.base, &next.joints);
        for leg in Leg::ALL {
            let i = leg.index();
            let q0 = leg.joint_index(0);
            if s.anchored[i] {
                match model.leg_ik(&kin_next.hip_pose(model, leg), &s.anchor[i], leg) {
                    Ok(q) => {
                        for k in 0..3 {
                            next.joints.velocity[q0 + k] = (q[k] - s.joints.angle[q0 + k]) / dt;
                            next.joints.angle[q0 + k] = q[k];
                        }
                        continue;
                    }
                    Err(_) => next.anchored[i] = false,
                }
            }
            for k in 0..3 {
                let j = q0 + k;
                let act = model.actuator(j);
                let mut v = s.joints.velocity[j] + dt * torque[j] / cfg.swing_inertia;
                let mut a = s.joints.angle[j] + dt * v;
                if a > act.theta_max {
                    a = act.theta_max;
                    v = v.min(0.0);
                } else if a < act.theta_min {
                    a = act.theta_min;
                    v = v.max(0.0);
                }
                next.joints.angle[j] = a;
                next.joints.velocity[j] = v;
            }
        }
        next.joints.torque = torque;
        next.time = s.time + dt;

        let limit = cfg.divergence_limit;
        let finite = |v: f64| v.is_finite() && v.abs() <= limit;
        let ok = next.base.position.iter().all(|&v| finite(v))
            && next.base.velocity.iter().all(|&v| finite(v))
            && next.base.angular_velocity.iter().all(|&v| finite(v))
            && next.base.rotation.matrix().iter().all(|&v| finite(v))
            && next.joints.angle.iter().chain(&next.joints.velocity).all(|&v| finite(v));
        if !ok {
            return Err(SimError::NumericalDivergence { time: next.time });
        }

        let contact = foot_force.map(|f| f.z > cfg.contact_threshold);
        let power = std::array::from_fn(|j| {
            if input.lock_spine && j < N_SPINE {
                0.0
            } else {
                model.electrical_power(j, torque[j], next.joints.velocity[j])
            }
        });
        Ok((next, StepReport { foot_force, contact, power }))
    }

    /// Kinetic plus gravitational energy.
    pub fn energy(&self, state: &SimState) -> f64 {
        let kin = Kinematics::compute(&self.model, &state.base, &state.joints);
        dynamics::kinetic_energy(&self.model, &kin, &state.base, &state.joints)
            + crate::model::gravity_potential(&self.model, &kin, self.config.gravity)
    }
}

/// Stance-leg joint torques that make the leg push `force` into the robot.
pub fn stance_torques(model: &RobotModel, kin: &Kinematics, leg: Leg, force: &Vec3) -> Vec3 {
    joint_torques_from_force(&kin.leg_jacobian(model, leg), &(-force))
}
