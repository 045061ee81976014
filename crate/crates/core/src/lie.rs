//! SO(3) / so(3) machinery.
//!
//! Rotations are plain `Matrix3<f64>` values wrapped in [`Rot3`]; tangent
//! vectors are `Vector3<f64>`. The generators of so(3) are the skew matrices
//! returned by [`generator`], and `hat(a, b, c) = a·G₀ + b·G₁ + c·G₂`.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this angle exp/log switch to Taylor expansions of their coefficients.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Tolerance on `‖W + Wᵀ‖` accepted by [`vee`].
pub const SKEW_TOL: f64 = 1e-9;

/// `log_so3` refuses rotations whose angle is within this margin of π.
pub const NEAR_PI_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("matrix is not skew-symmetric (|W + Wᵀ| = {0:e})")]
    NotSkew(f64),
    #[error("rotation angle {0} is within {NEAR_PI_MARGIN:e} of π; logarithm is ill-conditioned")]
    NearPiRotation(f64),
    #[error("matrix is not a proper rotation (orthogonality error {orth:e}, det {det})")]
    NotRotation { orth: f64, det: f64 },
}

/// A proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot3(Mat3);

impl Rot3 {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Wraps `m` after checking `m·mᵀ = I` and `det m = 1` within 1e-9.
    pub fn from_matrix(m: Mat3) -> Result<Self, LieError> {
        let orth = (m * m.transpose() - Mat3::identity()).norm();
        let det = m.determinant();
        if orth > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(LieError::NotRotation { orth, det });
        }
        Ok(Self(m))
    }

    /// Wraps `m` without validation. Callers guarantee it is a rotation.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Self(m)
    }

    /// Rotation of `angle` radians about `axis` (need not be normalised).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        exp_so3(&(axis * (angle / n)))
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::z(), angle)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn into_inner(self) -> Mat3 {
        self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Heading angle of the body x-axis projected onto the ground plane.
    pub fn yaw(&self) -> f64 {
        self.0[(1, 0)].atan2(self.0[(0, 0)])
    }

    /// Tilt of the body z-axis away from world z, in radians.
    pub fn tilt(&self) -> f64 {
        self.0[(2, 2)].clamp(-1.0, 1.0).acos()
    }

    /// Closest rotation to `m` in the Frobenius norm (polar factor).
    pub fn nearest(m: &Mat3) -> Self {
        let svd = m.svd(true, true);
        let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
        let d = (u * vt).determinant().signum();
        Self(u * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * vt)
    }

    /// Re-orthonormalises via Gram-Schmidt on the columns.
    pub fn renormalize(&self) -> Self {
        let x = self.0.column(0).normalize();
        let y = self.0.column(1) - x * x.dot(&self.0.column(1));
        let y = y.normalize();
        let z = x.cross(&y);
        Self(Mat3::from_columns(&[x, y, z]))
    }
}

impl std::ops::Mul for Rot3 {
    type Output = Rot3;
    fn mul(self, rhs: Rot3) -> Rot3 {
        Rot3(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vec3> for Rot3 {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl std::ops::Mul<&Vec3> for &Rot3 {
    type Output = Vec3;
    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// The n-th generator of so(3) (n ∈ {0, 1, 2}): infinitesimal rotation about x, y, z.
pub fn generator(n: usize) -> Mat3 {
    let mut e = Vec3::zeros();
    e[n] = 1.0;
    hat(&e)
}

/// Skew matrix with `hat(w)·u = w × u`.
pub fn hat(w: &Vec3) -> Mat3 {
    Mat3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Inverse of [`hat`]. Rejects matrices that are not skew within [`SKEW_TOL`].
pub fn vee(m: &Mat3) -> Result<Vec3, LieError> {
    let asym = (m + m.transpose()).norm();
    if asym >= SKEW_TOL {
        return Err(LieError::NotSkew(asym));
    }
    Ok(vee_unchecked(m))
}

fn vee_unchecked(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Exponential map so(3) → SO(3) (Rodrigues).
pub fn exp_so3(w: &Vec3) -> Rot3 {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(w);
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Rot3(Mat3::identity() + k * a + k * k * b)
}

/// Logarithm SO(3) → so(3), returned in vector form.
pub fn log_so3(r: &Rot3) -> Result<Vec3, LieError> {
    let m = r.matrix();
    let cos_theta = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    if theta > std::f64::consts::PI - NEAR_PI_MARGIN {
        return Err(LieError::NearPiRotation(theta));
    }
    let axial = vee_unchecked(&(m - m.transpose()));
    if theta < SMALL_ANGLE {
        // sin θ / θ ≈ 1 - θ²/6
        return Ok(axial * (0.5 * (1.0 + theta * theta / 6.0)));
    }
    if theta > 3.0 {
        // sin θ loses relative precision near π; recover the axis from the
        // symmetric part instead, using the antisymmetric part for the sign.
        let sym = (m + m.transpose()) * 0.5 - Mat3::identity() * cos_theta;
        let scale = 1.0 - cos_theta;
        let diag = Vec3::new(sym[(0, 0)], sym[(1, 1)], sym[(2, 2)]) / scale;
        let i = diag.imax();
        let mut axis = sym.column(i) / scale;
        axis /= axis.norm();
        if axis.dot(&axial) < 0.0 {
            axis = -axis;
        }
        return Ok(axis * theta);
    }
    Ok(axial * (0.5 * theta / theta.sin()))
}

/// Geodesic distance between two rotations, `‖log(a·bᵀ)‖`.
pub fn angle_between(a: &Rot3, b: &Rot3) -> Result<f64, LieError> {
    Ok(log_so3(&(*a * b.transpose()))?.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    /// Truncated power series of the matrix exponential.
    fn series_exp(w: &Vec3, terms: usize) -> Mat3 {
        let k = hat(w);
        let mut sum = Mat3::identity();
        let mut term = Mat3::identity();
        for n in 1..terms {
            term = term * k / n as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn nearest_rotation_recovers_and_averages() {
        let r = exp_so3(&Vec3::new(0.3, -0.2, 0.9));
        assert_relative_eq!(*Rot3::nearest(&(r.matrix() * 2.5)).matrix(), *r.matrix(), epsilon = 1e-12);
        // Equal weights on ±a about one axis average to the identity.
        let a = exp_so3(&Vec3::new(0.0, 0.2, 0.0));
        let b = exp_so3(&Vec3::new(0.0, -0.2, 0.0));
        assert_relative_eq!(*Rot3::nearest(&(a.matrix() + b.matrix())).matrix(), Mat3::identity(), epsilon = 1e-12);
        // Mirrored input still yields a proper rotation.
        let n = Rot3::nearest(&Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0)));
        assert_relative_eq!(n.matrix().determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hat_examples() {
        assert_eq!(hat(&Vec3::zeros()), Mat3::zeros());
        let g2 = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(hat(&Vec3::new(0.0, 0.0, 1.0)), g2);
        assert_eq!(generator(2), g2);
        let w = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(hat(&w) * Vec3::new(4.0, 5.0, 6.0), Vec3::new(-3.0, 6.0, -3.0));
    }

    #[test]
    fn vee_examples() {
        let w = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(vee(&hat(&w)).unwrap(), w);
        assert_eq!(vee(&Mat3::zeros()).unwrap(), Vec3::zeros());
        let g0 = Mat3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert_eq!(vee(&g0).unwrap(), Vec3::x());
        assert_eq!(generator(1), Mat3::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0));
    }

    #[test]
    fn vee_rejects_symmetric() {
        let m = Mat3::identity();
        assert!(matches!(vee(&m), Err(LieError::NotSkew(_))));
    }

    #[test]
    fn exp_examples() {
        assert_eq!(*exp_so3(&Vec3::zeros()).matrix(), Mat3::identity());
        let w = Vec3::new(0.0, 0.0, PI / 2.0);
        let oracle = series_exp(&w, 30);
        assert!((exp_so3(&w).matrix() - oracle).norm() < 1e-12);
    }

    #[test]
    fn exp_small_angle_branch() {
        let w = Vec3::new(3e-9, -1e-9, 2e-9);
        let r = exp_so3(&w);
        assert!((r.matrix() - series_exp(&w, 5)).norm() < 1e-18);
        assert_relative_eq!(log_so3(&r).unwrap(), w, epsilon = 1e-20);
    }

    #[test]
    fn log_examples() {
        assert_eq!(log_so3(&Rot3::identity()).unwrap(), Vec3::zeros());
        let w = Vec3::new(0.1, -0.2, 0.3);
        assert!((log_so3(&exp_so3(&w)).unwrap() - w).norm() < 1e-10);
        let r = Rot3::from_matrix(series_exp(&Vec3::new(0.0, 1.0, 0.0), 30)).unwrap();
        assert!((log_so3(&r).unwrap() - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn log_near_pi_is_error() {
        let r = exp_so3(&Vec3::new(PI - 1e-7, 0.0, 0.0));
        assert!(matches!(log_so3(&r), Err(LieError::NearPiRotation(_))));
    }

    #[test]
    fn log_close_to_pi_is_accurate() {
        let w = Vec3::new(0.3, -2.0, 2.2).normalize() * (PI - 1e-3);
        let back = log_so3(&exp_so3(&w)).unwrap();
        assert!((back - w).norm() < 1e-9, "{back} vs {w}");
    }

    #[test]
    fn rot3_validation() {
        assert!(Rot3::from_matrix(Mat3::identity() * 2.0).is_err());
        let reflect = Mat3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(Rot3::from_matrix(reflect).is_err());
        assert!(Rot3::from_matrix(*exp_so3(&Vec3::new(0.4, 0.1, -0.2)).matrix()).is_ok());
    }

    #[test]
    fn yaw_of_rot_z() {
        assert_relative_eq!(Rot3::rot_z(0.7).yaw(), 0.7, epsilon = 1e-15);
        assert_relative_eq!(Rot3::rot_z(-2.5).yaw(), -2.5, epsilon = 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vec3(max: f64) -> impl Strategy<Value = Vec3> {
            (-max..max, -max..max, -max..max).prop_map(|(x, y, z)| Vec3::new(x, y, z))
        }

        proptest! {
            #[test]
            fn exp_log_roundtrip(w in vec3(1.8).prop_filter("below pi", |w| w.norm() < PI - 0.1)) {
                let r = exp_so3(&w);
                prop_assert!((log_so3(&r).unwrap() - w).norm() < 1e-9);
                let orth = (r.matrix() * r.matrix().transpose() - Mat3::identity()).norm();
                prop_assert!(orth < 1e-9);
                prop_assert!((r.matrix().determinant() - 1.0).abs() < 1e-9);
            }

            #[test]
            fn exp_matches_series(w in vec3(1.8).prop_filter("norm", |w| w.norm() <= 3.0)) {
                prop_assert!((exp_so3(&w).matrix() - series_exp(&w, 30)).norm() < 1e-10);
            }

            #[test]
            fn exp_inverse(w in vec3(3.0)) {
                let p = exp_so3(&w) * exp_so3(&-w);
                prop_assert!((p.matrix() - Mat3::identity()).norm() < 1e-10);
            }

            #[test]
            fn hat_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, w1 in vec3(5.0), w2 in vec3(5.0)) {
                let lhs = hat(&(w1 * a + w2 * b));
                let rhs = hat(&w1) * a + hat(&w2) * b;
                // Each entry is a single a·x + b·y expression on both sides.
                prop_assert_eq!(lhs, rhs);
            }

            #[test]
            fn exp_of_log(w in vec3(1.8).prop_filter("norm", |w| w.norm() < PI - 0.01)) {
                let r = exp_so3(&w);
                let back = exp_so3(&log_so3(&r).unwrap());
                prop_assert!((back.matrix() - r.matrix()).norm() < 1e-9);
            }
        }
    }
}
