//! Forward kinematics over the link tree, closed-form leg IK and foot
//! Jacobians.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use thiserror::Error;

use super::{
    BodyId, BodyState, JointState, Leg, LinkJoint, RobotModel, HIP_PITCH_AXIS, HIP_ROLL_AXIS, KNEE_AXIS,
};
use crate::lie::{Mat3, Rot3, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IkError {
    #[error("foot target for {leg:?} is outside the reachable workspace")]
    Unreachable { leg: Leg },
    #[error("foot target for {leg:?} needs joint angles outside their limits")]
    OutOfLimits { leg: Leg, angles: [f64; 3] },
}

/// Rigid transform with a rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.translation + self.rotation * other.translation,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.translation + self.rotation * p
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.translation)
    }
}

fn axis_rotation(axis: &Vec3, angle: f64) -> Mat3 {
    Rot3::from_axis_angle(axis, angle).into_inner()
}

/// World poses of every link for one configuration.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub poses: Vec<Pose>,
}

impl Kinematics {
    /// Composes each link's pose from its parent's, root first.
    pub fn compute(model: &RobotModel, base: &BodyState, joints: &JointState) -> Self {
        let root = Pose::new(*base.rotation.matrix(), base.position);
        let mut poses: Vec<Pose> = Vec::with_capacity(model.links.len());
        for link in &model.links {
            let parent = match link.parent {
                Some(p) => poses[p],
                None => root,
            };
            let rotation = match link.joint {
                LinkJoint::Fixed => parent.rotation,
                LinkJoint::Revolute { joint, axis } => parent.rotation * axis_rotation(&axis, joints.angle[joint]),
            };
            poses.push(Pose { rotation, translation: parent.transform_point(&link.offset) });
        }
        Self { poses }
    }

    pub fn link_pose(&self, link: usize) -> &Pose {
        &self.poses[link]
    }

    pub fn body_pose(&self, model: &RobotModel, body: BodyId) -> Pose {
        self.poses[model.body_link(body)]
    }

    pub fn body_com(&self, model: &RobotModel, body: BodyId) -> Vec3 {
        self.body_pose(model, body).transform_point(&model.body(body).com)
    }

    /// Frame at the hip-roll joint, oriented with the parent body. Leg IK
    /// targets are expressed in this frame.
    pub fn hip_pose(&self, model: &RobotModel, leg: Leg) -> Pose {
        let link = model.hip_link(leg);
        let parent = self.poses[model.links[link].parent.expect("hip has parent")];
        Pose { rotation: parent.rotation, translation: self.poses[link].translation }
    }

    pub fn foot_position(&self, model: &RobotModel, leg: Leg) -> Vec3 {
        self.poses[model.foot_link(leg)].translation
    }

    /// World-frame axis and origin of the revolute joint on `link`.
    pub fn joint_axis(&self, model: &RobotModel, link: usize) -> Option<(Vec3, Vec3)> {
        match model.links[link].joint {
            LinkJoint::Fixed => None,
            LinkJoint::Revolute { axis, .. } => {
                let pose = &self.poses[link];
                Some((pose.rotation * axis, pose.translation))
            }
        }
    }

    /// Whole-robot centre of mass.
    pub fn com(&self, model: &RobotModel) -> Vec3 {
        let mut sum = Vec3::zeros();
        for b in BodyId::ALL {
            sum += self.body_com(model, b) * model.body(b).mass;
        }
        sum / model.total_mass()
    }

    /// Composite inertia about the whole-robot COM, world frame.
    pub fn composite_inertia(&self, model: &RobotModel) -> Mat3 {
        let c = self.com(model);
        let mut total = Mat3::zeros();
        for b in BodyId::ALL {
            let body = model.body(b);
            let r = self.body_pose(model, b).rotation;
            let d = self.body_com(model, b) - c;
            total += r * body.inertia * r.transpose()
                + (Mat3::identity() * d.norm_squared() - d * d.transpose()) * body.mass;
        }
        total
    }

    /// 3×3 map from leg joint rates to world foot velocity (base and spine
    /// held still).
    pub fn leg_jacobian(&self, model: &RobotModel, leg: Leg) -> Matrix3<f64> {
        let foot = self.foot_position(model, leg);
        let hip = model.hip_link(leg);
        let mut j = Matrix3::zeros();
        for k in 0..3 {
            let (axis, origin) = self.joint_axis(model, hip + k).expect("leg joints are revolute");
            j.set_column(k, &axis.cross(&(foot - origin)));
        }
        j
    }
}

/// τ = Jᵀ f.
pub fn joint_torques_from_force(jacobian: &Matrix3<f64>, force: &Vec3) -> Vec3 {
    jacobian.transpose() * force
}

impl RobotModel {
    /// Foot position in the hip frame for leg angles `q`.
    pub fn leg_fk_local(&self, leg: Leg, q: [f64; 3]) -> Vec3 {
        let g = &self.legs[leg.index()];
        let knee = axis_rotation(&KNEE_AXIS, q[2]) * g.v2;
        let pitch = axis_rotation(&HIP_PITCH_AXIS, q[1]) * (g.v1 + knee);
        axis_rotation(&HIP_ROLL_AXIS, q[0]) * (g.v0 + pitch)
    }

    /// Closed-form IK for one leg. Candidates are tried knee-backward first;
    /// the first one inside the joint limits wins.
    pub fn leg_ik(&self, hip: &Pose, target: &Vec3, leg: Leg) -> Result<[f64; 3], IkError> {
        let p = hip.inverse_transform_point(target);
        let g = &self.legs[leg.index()];
        let w = g.v0.y;
        let l1 = g.v1.norm();
        let l2 = g.v2.norm();

        let rho = p.y.hypot(p.z);
        if rho < w.abs() {
            return Err(IkError::Unreachable { leg });
        }
        let alpha = p.z.atan2(p.y);
        let beta = (w / rho).clamp(-1.0, 1.0).acos();

        let mut first_violation = None;
        for roll in [wrap(alpha + beta), wrap(alpha - beta)] {
            let (s, c) = roll.sin_cos();
            let x = p.x;
            let z = -s * p.y + c * p.z;
            let reach2 = x * x + z * z;
            let cos_knee = (reach2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
            if cos_knee > 1.0 + 1e-9 || cos_knee < -1.0 - 1e-9 {
                return Err(IkError::Unreachable { leg });
            }
            let knee_mag = cos_knee.clamp(-1.0, 1.0).acos();
            for knee in [knee_mag, -knee_mag] {
                let (sk, ck) = knee.sin_cos();
                // Foot in the pitch frame before the hip pitch rotation.
                let fx = l2 * sk;
                let fz = -l1 - l2 * ck;
                let pitch = wrap(x.atan2(z) - fx.atan2(fz));
                let q = [roll, pitch, knee];
                if (0..3).all(|k| self.within_limits(leg.joint_index(k), q[k])) {
                    return Ok(q);
                }
                first_violation.get_or_insert(q);
            }
        }
        Err(IkError::OutOfLimits { leg, angles: first_violation.expect("candidates tried") })
    }
}

fn wrap(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}
