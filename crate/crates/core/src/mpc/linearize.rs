//! Single-rigid-body model and its variation-based linearisation.
//!
//! The 12-dimensional state is `x = [r, η, v, ω]` where the orientation is
//! `R = exp(η̂)·R₀` about the operating rotation `R₀` and ω is the world-frame
//! angular velocity.

use nalgebra::{DMatrix, SMatrix, SVector};

use super::MpcError;
use crate::lie::{exp_so3, hat, log_so3, Mat3, Rot3, Vec3};
use crate::model::{BodyState, Leg, N_LEGS};

pub type Mat12 = SMatrix<f64, 12, 12>;
pub type Vec12 = SVector<f64, 12>;

/// Discrete affine model `x⁺ = A x + B u + d` for one horizon step, with `u`
/// stacking the forces of the stance feet in leg order.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedDynamics {
    pub a: Mat12,
    pub b: DMatrix<f64>,
    pub d: Vec12,
    pub stance: Vec<Leg>,
}

impl LinearizedDynamics {
    pub fn predict(&self, x: &Vec12, u: &[f64]) -> Vec12 {
        let mut out = self.a * x + self.d;
        for (col, &ui) in u.iter().enumerate() {
            for r in 0..12 {
                out[r] += self.b[(r, col)] * ui;
            }
        }
        out
    }
}

/// Explicit Euler step of the nonlinear rigid-body equations with the
/// rotation advanced on the group.
pub fn nonlinear_step(
    state: &BodyState,
    feet: &[Vec3; N_LEGS],
    forces: &[Vec3; N_LEGS],
    inertia_body: &Mat3,
    mass: f64,
    gravity: f64,
    dt: f64,
) -> BodyState {
    let r = state.rotation.matrix();
    let inertia = r * inertia_body * r.transpose();
    let mut f_sum = Vec3::zeros();
    let mut tau = Vec3::zeros();
    for i in 0..N_LEGS {
        f_sum += forces[i];
        tau += (feet[i] - state.position).cross(&forces[i]);
    }
    let w = state.angular_velocity;
    let w_dot = inertia.try_inverse().expect("inertia is invertible") * (tau - w.cross(&(inertia * w)));
    BodyState {
        position: state.position + state.velocity * dt,
        rotation: exp_so3(&(w * dt)) * state.rotation,
        velocity: state.velocity + (f_sum / mass + Vec3::new(0.0, 0.0, -gravity)) * dt,
        angular_velocity: w + w_dot * dt,
    }
}

/// Coordinates of `state` about the operating rotation `r0`.
pub fn to_coordinates(state: &BodyState, r0: &Rot3) -> Result<Vec12, MpcError> {
    let eta = log_so3(&(state.rotation * r0.transpose()))?;
    let mut x = Vec12::zeros();
    x.fixed_rows_mut::<3>(0).copy_from(&state.position);
    x.fixed_rows_mut::<3>(3).copy_from(&eta);
    x.fixed_rows_mut::<3>(6).copy_from(&state.velocity);
    x.fixed_rows_mut::<3>(9).copy_from(&state.angular_velocity);
    Ok(x)
}

pub fn from_coordinates(x: &Vec12, r0: &Rot3) -> BodyState {
    BodyState {
        position: x.fixed_rows::<3>(0).into(),
        rotation: exp_so3(&x.fixed_rows::<3>(3).into()) * *r0,
        velocity: x.fixed_rows::<3>(6).into(),
        angular_velocity: x.fixed_rows::<3>(9).into(),
    }
}

/// Inverse of the right Jacobian of SO(3).
fn right_jacobian_inv(a: &Vec3) -> Mat3 {
    let th = a.norm();
    let k = hat(a);
    let c = if th < 1e-4 {
        1.0 / 12.0 + th * th / 720.0
    } else {
        1.0 / (th * th) - (1.0 + th.cos()) / (2.0 * th * th.sin())
    };
    Mat3::identity() + k * 0.5 + k * k * c
}

/// First-order expansion of [`nonlinear_step`] about `(state, forces0)` with
/// only the `contact` feet able to push.
#[allow(clippy::too_many_arguments)]
pub fn linearize_dynamics(
    state: &BodyState,
    feet: &[Vec3; N_LEGS],
    contact: &[bool; N_LEGS],
    forces0: &[Vec3; N_LEGS],
    inertia_body: &Mat3,
    mass: f64,
    gravity: f64,
    dt: f64,
) -> Result<LinearizedDynamics, MpcError> {
    let stance: Vec<Leg> = Leg::ALL.into_iter().filter(|l| contact[l.index()]).collect();
    if stance.is_empty() {
        return Err(MpcError::NoStanceFeet);
    }
    let r0 = state.rotation.matrix();
    let i0 = r0 * inertia_body * r0.transpose();
    let i0_inv = i0.try_inverse().ok_or(MpcError::SingularInertia)?;
    let w0 = state.angular_velocity;
    let f0: Vec3 = stance.iter().map(|l| forces0[l.index()]).sum();
    let tau0: Vec3 = stance.iter().map(|l| (feet[l.index()] - state.position).cross(&forces0[l.index()])).sum();
    let iw = i0 * w0;
    let bias = tau0 - w0.cross(&iw);

    let dg_dr = i0_inv * hat(&f0);
    let dg_dw = -i0_inv * (hat(&w0) * i0 - hat(&iw));
    let dg_deta = -hat(&(i0_inv * bias)) + i0_inv * (hat(&bias) + hat(&w0) * hat(&iw) - hat(&w0) * i0 * hat(&w0));

    let eye = Mat3::identity();
    let mut a = Mat12::zeros();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&eye);
    a.fixed_view_mut::<3, 3>(0, 6).copy_from(&(eye * dt));
    a.fixed_view_mut::<3, 3>(3, 3).copy_from(&right_jacobian_inv(&(w0 * dt)));
    a.fixed_view_mut::<3, 3>(3, 9).copy_from(&(eye * dt));
    a.fixed_view_mut::<3, 3>(6, 6).copy_from(&eye);
    a.fixed_view_mut::<3, 3>(9, 0).copy_from(&(dg_dr * dt));
    a.fixed_view_mut::<3, 3>(9, 3).copy_from(&(dg_deta * dt));
    a.fixed_view_mut::<3, 3>(9, 9).copy_from(&(eye + dg_dw * dt));

    let mut b = DMatrix::zeros(12, 3 * stance.len());
    for (k, leg) in stance.iter().enumerate() {
        b.fixed_view_mut::<3, 3>(6, 3 * k).copy_from(&(eye * (dt / mass)));
        b.fixed_view_mut::<3, 3>(9, 3 * k).copy_from(&(i0_inv * hat(&(feet[leg.index()] - state.position)) * dt));
    }

    // Drift so that the model is exact at the operating point.
    let mut stance_forces = [Vec3::zeros(); N_LEGS];
    for l in &stance {
        stance_forces[l.index()] = forces0[l.index()];
    }
    let next = nonlinear_step(state, feet, &stance_forces, inertia_body, mass, gravity, dt);
    let x0 = to_coordinates(state, &state.rotation)?;
    let x1 = to_coordinates(&next, &state.rotation)?;
    let u0: Vec<f64> = stance.iter().flat_map(|l| forces0[l.index()].iter().copied().collect::<Vec<_>>()).collect();
    let mut lin = LinearizedDynamics { a, b, d: Vec12::zeros(), stance };
    let d = x1 - lin.predict(&x0, &u0);
    lin.d = d;
    Ok(lin)
}
