//! Generalised dynamics of the three-body chain.
//!
//! Coordinates are `ν = [v, ω, θ̇_fy, θ̇_fz, θ̇_ry, θ̇_rz]`: world-frame
//! velocity of the middle-body origin, world angular velocity of the middle
//! body and the four spine rates. Legs carry no mass.

use nalgebra::{SMatrix, SVector};

use crate::lie::{hat, Mat3, Vec3};
use crate::model::{BodyId, BodyState, JointState, Kinematics, LinkJoint, RobotModel, SpineJoint, N_SPINE};

pub const NDOF: usize = 6 + N_SPINE;

pub type Mat10 = SMatrix<f64, NDOF, NDOF>;
pub type Vec10 = SVector<f64, NDOF>;
pub type Jac = SMatrix<f64, 3, NDOF>;

pub fn generalized_velocity(base: &BodyState, joints: &JointState) -> Vec10 {
    let mut nu = Vec10::zeros();
    nu.fixed_rows_mut::<3>(0).copy_from(&base.velocity);
    nu.fixed_rows_mut::<3>(3).copy_from(&base.angular_velocity);
    for j in 0..N_SPINE {
        nu[6 + j] = joints.velocity[j];
    }
    nu
}

/// Velocity Jacobian of a world point rigidly attached to `link`.
pub fn point_jacobian(model: &RobotModel, kin: &Kinematics, base: &BodyState, link: usize, p: &Vec3) -> Jac {
    let mut j = Jac::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Mat3::identity());
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-hat(&(p - base.position))));
    for s in SpineJoint::ALL {
        let sl = model.spine_link(s);
        if model.is_ancestor(sl, link) {
            let (axis, origin) = kin.joint_axis(model, sl).expect("spine joint");
            j.set_column(6 + s.index(), &axis.cross(&(p - origin)));
        }
    }
    j
}

/// Angular-velocity Jacobian of `link`.
pub fn rotation_jacobian(model: &RobotModel, kin: &Kinematics, link: usize) -> Jac {
    let mut j = Jac::zeros();
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&Mat3::identity());
    for s in SpineJoint::ALL {
        let sl = model.spine_link(s);
        if model.is_ancestor(sl, link) {
            let (axis, _) = kin.joint_axis(model, sl).expect("spine joint");
            j.set_column(6 + s.index(), &axis);
        }
    }
    j
}

/// Mass matrix and the generalised force of gravity and velocity-product
/// terms, so that `M ν̇ = bias + Σ Jᵀ F_ext + τ_spine`.
pub fn mass_and_bias(model: &RobotModel, kin: &Kinematics, base: &BodyState, joints: &JointState, gravity: f64) -> (Mat10, Vec10) {
    // Link angular velocity plus the velocity-product parts of the origin
    // and angular accelerations, root first.
    let n = model.links.len();
    let mut omega = vec![Vec3::zeros(); n];
    let mut acc = vec![Vec3::zeros(); n];
    let mut alpha = vec![Vec3::zeros(); n];
    for (i, link) in model.links.iter().enumerate() {
        match link.parent {
            None => omega[i] = base.angular_velocity,
            Some(p) => {
                let d = kin.poses[i].translation - kin.poses[p].translation;
                let wp = omega[p];
                acc[i] = acc[p] + alpha[p].cross(&d) + wp.cross(&wp.cross(&d));
                omega[i] = wp;
                alpha[i] = alpha[p];
                if let LinkJoint::Revolute { joint, axis } = link.joint {
                    if joint < N_SPINE {
                        let a = kin.poses[p].rotation * axis * joints.velocity[joint];
                        omega[i] += a;
                        alpha[i] += wp.cross(&a);
                    }
                }
            }
        }
    }

    let g = Vec3::new(0.0, 0.0, -gravity);
    let mut m = Mat10::zeros();
    let mut h = Vec10::zeros();
    for b in BodyId::ALL {
        let body = model.body(b);
        let link = model.body_link(b);
        let rot = kin.poses[link].rotation;
        let c = kin.body_com(model, b);
        let inertia = rot * body.inertia * rot.transpose();
        let jv = point_jacobian(model, kin, base, link, &c);
        let jw = rotation_jacobian(model, kin, link);
        m += jv.transpose() * jv * body.mass + jw.transpose() * inertia * jw;
        let d = c - kin.poses[link].translation;
        let w = omega[link];
        let a_c = acc[link] + alpha[link].cross(&d) + w.cross(&w.cross(&d));
        h += jv.transpose() * ((g - a_c) * body.mass);
        h += jw.transpose() * (-(inertia * alpha[link]) - w.cross(&(inertia * w)));
    }
    (m, h)
}

/// Kinetic energy of the three bodies.
pub fn kinetic_energy(model: &RobotModel, kin: &Kinematics, base: &BodyState, joints: &JointState) -> f64 {
    let (m, _) = mass_and_bias(model, kin, base, joints, 0.0);
    let nu = generalized_velocity(base, joints);
    0.5 * (nu.transpose() * m * nu)[0]
}
