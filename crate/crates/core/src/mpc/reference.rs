use serde::{Deserialize, Serialize};

use super::MpcConfig;
use crate::gait::GaitId;
use crate::lie::{Rot3, Vec3};
use crate::model::BodyState;

/// Commanded twist in the heading frame: forward and lateral speed (m/s)
/// and yaw rate (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityCommand {
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
    #[serde(default)]
    pub yaw_rate: f64,
}

impl VelocityCommand {
    pub fn new(vx: f64, vy: f64, yaw_rate: f64) -> Self {
        Self { vx, vy, yaw_rate }
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.yaw_rate.is_finite()
    }

    /// Default experiment command for each gait.
    pub fn default_for(gait: GaitId) -> Self {
        match gait {
            GaitId::Walk => Self::new(0.3, 0.0, 0.0),
            GaitId::Turn => Self::new(0.3, 0.0, -0.5),
            GaitId::Trot => Self::new(0.6, 0.0, 0.0),
            GaitId::Stand => Self::default(),
        }
    }

    /// Moves `self` toward `target` by at most the configured acceleration
    /// over `dt`.
    pub fn ramp_toward(&self, target: &VelocityCommand, dt: f64, config: &MpcConfig) -> VelocityCommand {
        let step = |cur: f64, tgt: f64, rate: f64| cur + (tgt - cur).clamp(-rate * dt, rate * dt);
        VelocityCommand {
            vx: step(self.vx, target.vx, config.linear_accel),
            vy: step(self.vy, target.vy, config.linear_accel),
            yaw_rate: step(self.yaw_rate, target.yaw_rate, config.yaw_accel),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub position: Vec3,
    pub rotation: Rot3,
    pub velocity: Vec3,
    pub angular_velocity: Vec3,
}

/// Desired states for horizon steps 1..=N. The commanded twist starts at
/// `current`, ramps toward `target` and is integrated from `start`; the
/// height is held at `height`.
pub fn build_reference(
    current: &VelocityCommand,
    target: &VelocityCommand,
    start: &BodyState,
    height: f64,
    config: &MpcConfig,
) -> Vec<ReferencePoint> {
    let dt = config.dt;
    let mut cmd = *current;
    let mut dyaw = 0.0;
    let yaw0 = start.rotation.yaw();
    let mut pos = Vec3::new(start.position.x, start.position.y, height);
    let mut out = Vec::with_capacity(config.horizon);
    for _ in 0..config.horizon {
        let (s, c) = (yaw0 + dyaw).sin_cos();
        pos += Vec3::new(c * cmd.vx - s * cmd.vy, s * cmd.vx + c * cmd.vy, 0.0) * dt;
        dyaw += cmd.yaw_rate * dt;
        cmd = cmd.ramp_toward(target, dt, config);
        let (s, c) = (yaw0 + dyaw).sin_cos();
        out.push(ReferencePoint {
            position: pos,
            rotation: Rot3::rot_z(dyaw) * start.rotation,
            velocity: Vec3::new(c * cmd.vx - s * cmd.vy, s * cmd.vx + c * cmd.vy, 0.0),
            angular_velocity: Vec3::new(0.0, 0.0, cmd.yaw_rate),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::exp_so3;

    #[test]
    fn gait_defaults() {
        assert_eq!(VelocityCommand::default_for(GaitId::Walk), VelocityCommand::new(0.3, 0.0, 0.0));
        assert_eq!(VelocityCommand::default_for(GaitId::Turn), VelocityCommand::new(0.3, 0.0, -0.5));
        assert_eq!(VelocityCommand::default_for(GaitId::Trot), VelocityCommand::new(0.6, 0.0, 0.0));
        assert_eq!(VelocityCommand::default_for(GaitId::Stand), VelocityCommand::default());
    }

    #[test]
    fn zero_command_is_constant() {
        let cfg = MpcConfig::default();
        let start = BodyState::at_rest(Vec3::new(0.3, -0.1, 0.18));
        let zero = VelocityCommand::default();
        let refs = build_reference(&zero, &zero, &start, 0.18, &cfg);
        assert_eq!(refs.len(), cfg.horizon);
        for r in refs {
            assert_eq!(r.position, start.position);
            assert_eq!(r.rotation, start.rotation);
            assert_eq!(r.velocity, Vec3::zeros());
        }
    }

    #[test]
    fn one_step_advance_at_speed() {
        let cfg = MpcConfig { horizon: 1, dt: 0.025, ..MpcConfig::default() };
        let start = BodyState::at_rest(Vec3::new(0.0, 0.0, 0.18));
        let cmd = VelocityCommand::new(0.3, 0.0, 0.0);
        let refs = build_reference(&cmd, &cmd, &start, 0.18, &cfg);
        assert!((refs[0].position.x - 0.0075).abs() < 1e-15);
    }

    #[test]
    fn yaw_reference_matches_exp() {
        let cfg = MpcConfig::default();
        let mut start = BodyState::at_rest(Vec3::new(0.0, 0.0, 0.18));
        start.rotation = exp_so3(&Vec3::new(0.02, -0.01, 0.4));
        let cmd = VelocityCommand::new(0.0, 0.0, -0.5);
        let refs = build_reference(&cmd, &cmd, &start, 0.18, &cfg);
        for (k, r) in refs.iter().enumerate() {
            let expected = exp_so3(&Vec3::new(0.0, 0.0, -0.5 * (k + 1) as f64 * cfg.dt)) * start.rotation;
            assert!((r.rotation.matrix() - expected.matrix()).norm() < 1e-12);
        }
    }

    #[test]
    fn ramp_respects_limits() {
        let cfg = MpcConfig::default();
        let start = BodyState::at_rest(Vec3::new(0.0, 0.0, 0.18));
        let target = VelocityCommand::new(0.6, 0.0, -0.5);
        let refs = build_reference(&VelocityCommand::default(), &target, &start, 0.18, &cfg);
        for (k, r) in refs.iter().enumerate() {
            let t = (k + 1) as f64 * cfg.dt;
            assert!((r.velocity.norm() - (0.5 * t).min(0.6)).abs() < 1e-9);
            assert!((r.angular_velocity.z + (1.0 * t).min(0.5)).abs() < 1e-9);
        }
    }
}
