//! Single-rigid-body model predictive control of the stance forces.

mod build;
mod linearize;
mod reference;
mod solver;

pub use build::{build_qp, foot_constraints, ROWS_PER_FOOT};
pub use linearize::{from_coordinates, linearize_dynamics, nonlinear_step, to_coordinates, LinearizedDynamics, Mat12, Vec12};
pub use reference::{build_reference, ReferencePoint, VelocityCommand};
pub use solver::{solve_qp, solve_qp_with, QpError, QpProblem, QpSettings, QpSolution};

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lie::{log_so3, LieError, Mat3, Vec3};
use crate::model::{BodyState, N_LEGS};

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("no stance feet at the current step")]
    NoStanceFeet,
    #[error("inertia matrix is singular")]
    SingularInertia,
    #[error("invalid MPC config: {0}")]
    InvalidConfig(String),
    #[error("non-finite MPC input")]
    NonFinite,
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error("QP solver: {0}")]
    Solver(#[from] QpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    /// Diagonal state weights `[r, η, v, ω]`.
    pub state_weights: [f64; 12],
    /// Weight on every force component.
    pub force_weight: f64,
    pub mu: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub gravity: f64,
    /// Reference ramp limits (m/s², rad/s²).
    pub linear_accel: f64,
    pub yaw_accel: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            dt: 0.025,
            state_weights: [50.0, 50.0, 50.0, 50.0, 50.0, 50.0, 10.0, 10.0, 10.0, 5.0, 5.0, 5.0],
            force_weight: 1e-4,
            mu: 1.0,
            f_min: 0.0,
            f_max: 60.0,
            gravity: 9.81,
            linear_accel: 0.5,
            yaw_accel: 1.0,
            max_iterations: 60,
            tolerance: 1e-9,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), MpcError> {
        let bad = |m: &str| Err(MpcError::InvalidConfig(m.to_string()));
        if self.horizon < 1 {
            return bad("horizon must be at least 1");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad("mu must be positive");
        }
        if !(self.f_min >= 0.0 && self.f_max > self.f_min && self.f_max.is_finite()) {
            return bad("force bounds must satisfy f_max > f_min >= 0");
        }
        if self.state_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("state weights must be finite and non-negative");
        }
        if !(self.force_weight > 0.0 && self.force_weight.is_finite()) {
            return bad("force weight must be positive");
        }
        if !(self.gravity.is_finite() && self.linear_accel > 0.0 && self.yaw_accel > 0.0) {
            return bad("gravity and ramp limits must be finite and positive");
        }
        if self.max_iterations == 0 || !(self.tolerance > 0.0) {
            return bad("solver settings must be positive");
        }
        Ok(())
    }

    fn qp_settings(&self) -> QpSettings {
        QpSettings { max_iterations: self.max_iterations, tolerance: self.tolerance }
    }

    /// Projects `f` onto the force bounds and friction pyramid.
    pub fn clamp_force(&self, f: Vec3) -> Vec3 {
        let z = f.z.clamp(self.f_min, self.f_max);
        let lim = self.mu * z;
        Vec3::new(f.x.clamp(-lim, lim), f.y.clamp(-lim, lim), z)
    }
}

/// Predicted foot positions and contacts at one horizon step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanStep {
    pub feet: [Vec3; N_LEGS],
    pub contact: [bool; N_LEGS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcInput {
    /// Lumped body: COM position, orientation, world velocities.
    pub state: BodyState,
    /// World-frame inertia about the COM.
    pub inertia: Mat3,
    pub mass: f64,
    /// One entry per horizon step; shorter plans repeat their last entry.
    pub plan: Vec<PlanStep>,
    /// Pose the reference is integrated from.
    pub reference_start: BodyState,
    pub height: f64,
    pub command: VelocityCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Iteration cap reached; best iterate used.
    Degraded,
    /// Infeasible QP; previous forces reused.
    Stale,
    /// No stance feet at the current step; zero forces.
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcOutput {
    pub forces: [Vec3; N_LEGS],
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub solve_time: f64,
}

/// Controller instance holding the ramped command and the last forces.
#[derive(Debug, Clone)]
pub struct Mpc {
    pub config: MpcConfig,
    command: VelocityCommand,
    last_forces: [Vec3; N_LEGS],
}

impl Mpc {
    pub fn new(config: MpcConfig) -> Result<Self, MpcError> {
        config.validate()?;
        Ok(Self { config, command: VelocityCommand::default(), last_forces: [Vec3::zeros(); N_LEGS] })
    }

    /// Command currently fed to the reference after ramping.
    pub fn ramped_command(&self) -> VelocityCommand {
        self.command
    }

    pub fn set_ramped_command(&mut self, cmd: VelocityCommand) {
        self.command = cmd;
    }

    pub fn last_forces(&self) -> [Vec3; N_LEGS] {
        self.last_forces
    }

    /// Solves one control tick. `tick` is the control period used to advance
    /// the command ramp.
    pub fn step(&mut self, input: &MpcInput, tick: f64) -> Result<MpcOutput, MpcError> {
        let started = Instant::now();
        let cfg = &self.config;
        if !input.command.is_finite() || !input.mass.is_finite() || input.inertia.iter().any(|v| !v.is_finite()) {
            return Err(MpcError::NonFinite);
        }
        if input.plan.is_empty() {
            return Err(MpcError::InvalidConfig("empty plan".into()));
        }
        let plan_at = |k: usize| input.plan[k.min(input.plan.len() - 1)];
        let current = self.command;
        self.command = current.ramp_toward(&input.command, tick, cfg);

        if !plan_at(0).contact.iter().any(|&c| c) {
            self.last_forces = [Vec3::zeros(); N_LEGS];
            return Ok(MpcOutput {
                forces: self.last_forces,
                status: SolveStatus::Idle,
                iterations: 0,
                kkt_residual: 0.0,
                solve_time: started.elapsed().as_secs_f64(),
            });
        }

        let r0 = input.state.rotation;
        let inertia_body = r0.matrix().transpose() * input.inertia * r0.matrix();
        let mut steps = Vec::with_capacity(cfg.horizon);
        for k in 0..cfg.horizon {
            let p = plan_at(k);
            let n = p.contact.iter().filter(|&&c| c).count();
            let lin = if n == 0 {
                let mut l = linearize_dynamics(
                    &input.state,
                    &p.feet,
                    &[true; N_LEGS],
                    &[Vec3::zeros(); N_LEGS],
                    &inertia_body,
                    input.mass,
                    cfg.gravity,
                    cfg.dt,
                )?;
                l.b = nalgebra::DMatrix::zeros(12, 0);
                l.stance.clear();
                l
            } else {
                let share = Vec3::new(0.0, 0.0, input.mass * cfg.gravity / n as f64);
                linearize_dynamics(
                    &input.state,
                    &p.feet,
                    &p.contact,
                    &[share; N_LEGS],
                    &inertia_body,
                    input.mass,
                    cfg.gravity,
                    cfg.dt,
                )?
            };
            steps.push(lin);
        }

        let refs = build_reference(&current, &input.command, &input.reference_start, input.height, cfg);
        let mut xrefs = Vec::with_capacity(refs.len());
        for r in &refs {
            let eta = log_so3(&(r.rotation * r0.transpose()))?;
            let mut x = Vec12::zeros();
            x.fixed_rows_mut::<3>(0).copy_from(&r.position);
            x.fixed_rows_mut::<3>(3).copy_from(&eta);
            x.fixed_rows_mut::<3>(6).copy_from(&r.velocity);
            x.fixed_rows_mut::<3>(9).copy_from(&r.angular_velocity);
            xrefs.push(x);
        }
        let x0 = to_coordinates(&input.state, &r0)?;
        let qp = build_qp(&steps, &x0, &xrefs, cfg);

        let (sol, status) = match solve_qp_with(&qp, &cfg.qp_settings()) {
            Ok(s) => (s, SolveStatus::Optimal),
            Err(QpError::MaxIterations(s)) => (*s, SolveStatus::Degraded),
            Err(QpError::Infeasible { iterations }) => {
                return Ok(MpcOutput {
                    forces: self.last_forces,
                    status: SolveStatus::Stale,
                    iterations,
                    kkt_residual: f64::NAN,
                    solve_time: started.elapsed().as_secs_f64(),
                });
            }
            Err(e) => return Err(e.into()),
        };

        let mut forces = [Vec3::zeros(); N_LEGS];
        for (k, leg) in steps[0].stance.iter().enumerate() {
            let f = Vec3::new(sol.x[3 * k], sol.x[3 * k + 1], sol.x[3 * k + 2]);
            forces[leg.index()] = cfg.clamp_force(f);
        }
        self.last_forces = forces;
        Ok(MpcOutput {
            forces,
            status,
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            solve_time: started.elapsed().as_secs_f64(),
        })
    }
}

/// Stateless solve holding the contact set and feet fixed over the horizon,
/// with the command already at speed.
pub fn mpc_step(
    state: &BodyState,
    feet: &[Vec3; N_LEGS],
    contact: &[bool; N_LEGS],
    cmd: &VelocityCommand,
    inertia: &Mat3,
    mass: f64,
    config: &MpcConfig,
) -> Result<MpcOutput, MpcError> {
    let mut mpc = Mpc::new(config.clone())?;
    mpc.command = *cmd;
    let input = MpcInput {
        state: *state,
        inertia: *inertia,
        mass,
        plan: vec![PlanStep { feet: *feet, contact: *contact }],
        reference_start: *state,
        height: state.position.z,
        command: *cmd,
    };
    mpc.step(&input, config.dt)
}
