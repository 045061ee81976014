//! Condensed QP over the stacked stance forces of the whole horizon.

use nalgebra::{DMatrix, DVector};

use super::linearize::{LinearizedDynamics, Vec12};
use super::solver::QpProblem;
use super::MpcConfig;

/// Number of inequality rows per stance foot: f_z bounds and four pyramid faces.
pub const ROWS_PER_FOOT: usize = 6;

/// Writes the six constraint rows of one foot whose force starts at column `col`.
fn foot_rows(c: &mut DMatrix<f64>, b: &mut DVector<f64>, row: usize, col: usize, config: &MpcConfig) {
    let (x, y, z) = (col, col + 1, col + 2);
    let mu = config.mu;
    c[(row, z)] = -1.0;
    b[row] = -config.f_min;
    c[(row + 1, z)] = 1.0;
    b[row + 1] = config.f_max;
    c[(row + 2, x)] = 1.0;
    c[(row + 2, z)] = -mu;
    c[(row + 3, x)] = -1.0;
    c[(row + 3, z)] = -mu;
    c[(row + 4, y)] = 1.0;
    c[(row + 4, z)] = -mu;
    c[(row + 5, y)] = -1.0;
    c[(row + 5, z)] = -mu;
}

/// Inequality rows `C f ≤ b` for a single foot force.
pub fn foot_constraints(config: &MpcConfig) -> (DMatrix<f64>, DVector<f64>) {
    let mut c = DMatrix::zeros(ROWS_PER_FOOT, 3);
    let mut b = DVector::zeros(ROWS_PER_FOOT);
    foot_rows(&mut c, &mut b, 0, 0, config);
    (c, b)
}

/// Condenses `x_{k+1} = A_k x_k + B_k u_k + d_k` from `x0` over `lin.len()`
/// steps against `refs` (states 1..=N). Decision variables are laid out step
/// by step, stance feet in leg order.
pub fn build_qp(lin: &[LinearizedDynamics], x0: &Vec12, refs: &[Vec12], config: &MpcConfig) -> QpProblem {
    assert_eq!(lin.len(), refs.len(), "one reference per horizon step");
    let n: usize = lin.iter().map(|l| l.b.ncols()).sum();
    let q = &config.state_weights;

    let mut h = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    // x_k = phi·U + c, with phi nonzero only in the first `used` columns.
    let mut phi = DMatrix::<f64>::zeros(12, n);
    let mut c = *x0;
    let mut used = 0;
    for (step, r) in lin.iter().zip(refs) {
        let cols = step.b.ncols();
        let next_phi = {
            let mut p = DMatrix::<f64>::zeros(12, n);
            if used > 0 {
                let prev = phi.columns(0, used);
                p.columns_mut(0, used).copy_from(&(step.a * prev));
            }
            p.columns_mut(used, cols).copy_from(&step.b);
            p
        };
        phi = next_phi;
        c = step.a * c + step.d;
        used += cols;

        let e = c - r;
        let active = phi.columns(0, used);
        let mut qphi = active.clone_owned();
        for row in 0..12 {
            qphi.row_mut(row).scale_mut(q[row]);
        }
        let block = active.transpose() * &qphi;
        let mut hv = h.view_mut((0, 0), (used, used));
        hv += block * 2.0;
        let qe = DVector::from_iterator(12, (0..12).map(|i| q[i] * e[i]));
        let mut gv = g.rows_mut(0, used);
        gv += active.transpose() * qe * 2.0;
    }
    for i in 0..n {
        h[(i, i)] += 2.0 * config.force_weight;
    }
    // Symmetrise against round-off.
    let h = (&h + h.transpose()) * 0.5;

    let m = ROWS_PER_FOOT * n / 3;
    let mut cm = DMatrix::zeros(m, n);
    let mut bm = DVector::zeros(m);
    for foot in 0..n / 3 {
        foot_rows(&mut cm, &mut bm, ROWS_PER_FOOT * foot, 3 * foot, config);
    }
    QpProblem { h, g, c: cm, b: bm }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{hat, Vec3};
    use crate::model::Leg;
    use nalgebra::SMatrix;

    fn unit_config() -> MpcConfig {
        MpcConfig { horizon: 1, state_weights: [1.0; 12], force_weight: 1.0, ..MpcConfig::default() }
    }

    #[test]
    fn one_foot_one_step_hand_assembly() {
        let cfg = unit_config();
        let mut a = SMatrix::<f64, 12, 12>::identity();
        a[(0, 6)] = 0.1;
        let mut b = DMatrix::zeros(12, 3);
        for i in 0..3 {
            b[(6 + i, i)] = 0.5;
        }
        b.fixed_view_mut::<3, 3>(9, 0).copy_from(&hat(&Vec3::new(0.1, 0.0, -0.2)));
        let d = Vec12::from_fn(|i, _| i as f64 * 0.01);
        let lin = LinearizedDynamics { a, b: b.clone(), d, stance: vec![Leg::FrontLeft] };
        let x0 = Vec12::from_fn(|i, _| 0.1 * (i as f64).sin());
        let r = Vec12::from_fn(|i, _| 0.05 * i as f64);
        let qp = build_qp(&[lin], &x0, &[r], &cfg);
        // H = 2(BᵀB + I), g = 2Bᵀ(Ax0 + d − r) with Q = R = I.
        let h = (b.transpose() * &b + DMatrix::identity(3, 3)) * 2.0;
        let e = a * x0 + d - r;
        let g = b.transpose() * DVector::from_column_slice(e.as_slice()) * 2.0;
        assert!((qp.h - h).norm() < 1e-14);
        assert!((qp.g - g).norm() < 1e-14);
        assert_eq!(qp.c.nrows(), 6);
    }

    #[test]
    fn two_steps_match_explicit_rollout() {
        let mut cfg = unit_config();
        cfg.horizon = 2;
        cfg.state_weights = [1.0, 2.0, 3.0, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 4.0, 4.0, 4.0];
        cfg.force_weight = 0.01;
        let mut a = SMatrix::<f64, 12, 12>::identity();
        a[(0, 6)] = 0.1;
        a[(4, 10)] = 0.1;
        let mut b1 = DMatrix::zeros(12, 6);
        let mut b2 = DMatrix::zeros(12, 3);
        for i in 0..3 {
            b1[(6 + i, i)] = 0.3;
            b1[(6 + i, 3 + i)] = 0.3;
            b2[(6 + i, i)] = 0.3;
        }
        b1[(9, 2)] = 0.2;
        b2[(10, 0)] = -0.1;
        let d = Vec12::from_fn(|i, _| if i == 8 { -0.25 } else { 0.0 });
        let l1 = LinearizedDynamics { a, b: b1, d, stance: vec![Leg::FrontLeft, Leg::RearRight] };
        let l2 = LinearizedDynamics { a, b: b2, d, stance: vec![Leg::FrontRight] };
        let x0 = Vec12::from_fn(|i, _| 0.01 * i as f64);
        let refs = [Vec12::from_element(0.1), Vec12::from_element(0.2)];
        let qp = build_qp(&[l1.clone(), l2.clone()], &x0, &refs, &cfg);
        assert_eq!(qp.h.nrows(), 9);
        let cost = |u: &DVector<f64>| {
            let x1 = l1.predict(&x0, &u.as_slice()[0..6]);
            let x2 = l2.predict(&x1, &u.as_slice()[6..9]);
            let mut j = 0.0;
            for (x, r) in [(x1, refs[0]), (x2, refs[1])] {
                for i in 0..12 {
                    j += cfg.state_weights[i] * (x[i] - r[i]).powi(2);
                }
            }
            j + cfg.force_weight * u.norm_squared()
        };
        let j0 = cost(&DVector::zeros(9));
        for k in 0..5 {
            let u = DVector::from_fn(9, |i, _| ((i + 3 * k) as f64 * 0.7).cos() * 3.0);
            let quad = 0.5 * (u.transpose() * &qp.h * &u)[0] + qp.g.dot(&u) + j0;
            assert!((quad - cost(&u)).abs() < 1e-9 * cost(&u).max(1.0));
        }
    }

    #[test]
    fn pyramid_row_violation() {
        let cfg = MpcConfig { mu: 1.0, ..MpcConfig::default() };
        let (c, b) = foot_constraints(&cfg);
        let f = DVector::from_vec(vec![2.0, 0.0, 1.0]);
        let slack = &c * f - b;
        assert!((slack[2] - 1.0).abs() < 1e-15);
        assert!(slack[3] < 0.0 && slack[0] < 0.0 && slack[1] < 0.0);
    }
}
