//! Quasi-static spine torques.

use super::{BodyId, Kinematics, Leg, RobotModel, SpineJoint, N_LEGS, N_SPINE};
use crate::lie::Vec3;

/// Gravitational potential energy of the three bodies, J.
pub fn gravity_potential(model: &RobotModel, kin: &Kinematics, gravity: f64) -> f64 {
    BodyId::ALL
        .iter()
        .map(|&b| model.body(b).mass * gravity * kin.body_com(model, b).z)
        .sum()
}

impl RobotModel {
    /// Spine torques that hold the distal bodies against gravity and the
    /// ground forces acting on distal feet. `forces` are ground reaction
    /// forces on the robot (zero for swing feet).
    pub fn spine_feedforward_torque(&self, kin: &Kinematics, gravity: f64, forces: &[Vec3; N_LEGS]) -> [f64; N_SPINE] {
        let g = Vec3::new(0.0, 0.0, -gravity);
        SpineJoint::ALL.map(|j| {
            let link = self.spine_link(j);
            let (axis, origin) = kin.joint_axis(self, link).expect("spine joints are revolute");
            let mut moment = Vec3::zeros();
            for b in BodyId::ALL {
                if self.is_ancestor(link, self.body_link(b)) {
                    moment += (kin.body_com(self, b) - origin).cross(&(g * self.body(b).mass));
                }
            }
            for leg in Leg::ALL {
                if self.is_ancestor(link, self.foot_link(leg)) {
                    moment += (kin.foot_position(self, leg) - origin).cross(&forces[leg.index()]);
                }
            }
            -axis.dot(&moment)
        })
    }
}
