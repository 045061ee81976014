//! Dense primal-dual interior-point solver for
//! `min ½xᵀHx + gᵀx  s.t.  Cx ≤ b` (Mehrotra predictor-corrector).
//!
//! Constraint rows are stored sparsely; MPC rows touch at most two
//! variables, which keeps the normal-matrix update cheap.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    /// Inequality matrix, one row per constraint.
    pub c: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl QpProblem {
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }

    /// Largest violation max(Cx − b, 0).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        (&self.c * x - &self.b).iter().fold(0.0f64, |a, &v| a.max(v))
    }

    /// ∞-norm KKT residual of `(x, z)`: stationarity, primal feasibility and
    /// complementarity.
    pub fn kkt_residual(&self, x: &DVector<f64>, z: &DVector<f64>) -> f64 {
        let stat = (&self.h * x + &self.g + self.c.transpose() * z).amax();
        let slack = &self.b - &self.c * x;
        let comp = slack.iter().zip(z.iter()).fold(0.0f64, |a, (s, z)| a.max((s * z).abs()));
        let dual = z.iter().fold(0.0f64, |a, &z| a.max(-z));
        stat.max(self.max_violation(x)).max(comp).max(dual)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { max_iterations: 60, tolerance: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Inequality multipliers.
    pub z: DVector<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// True when the solver stopped before meeting its tolerance.
    pub degraded: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("QP dimensions are inconsistent: {0}")]
    Dimension(String),
    #[error("QP Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("QP constraints are infeasible (detected after {iterations} iterations)")]
    Infeasible { iterations: usize },
    #[error("QP solver hit its iteration limit (residual {})", .0.kkt_residual)]
    MaxIterations(Box<QpSolution>),
}

struct SparseRows {
    idx: Vec<Vec<usize>>,
    val: Vec<Vec<f64>>,
}

impl SparseRows {
    fn new(c: &DMatrix<f64>) -> Self {
        let mut idx = Vec::with_capacity(c.nrows());
        let mut val = Vec::with_capacity(c.nrows());
        for i in 0..c.nrows() {
            let mut ri = Vec::new();
            let mut rv = Vec::new();
            for j in 0..c.ncols() {
                let v = c[(i, j)];
                if v != 0.0 {
                    ri.push(j);
                    rv.push(v);
                }
            }
            idx.push(ri);
            val.push(rv);
        }
        Self { idx, val }
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        self.idx[i].iter().zip(&self.val[i]).map(|(&j, &v)| v * x[j]).sum()
    }

    /// out += Cᵀ y
    fn add_transpose_mul(&self, y: &[f64], out: &mut [f64]) {
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                for (&j, &v) in self.idx[i].iter().zip(&self.val[i]) {
                    out[j] += v * yi;
                }
            }
        }
    }

    /// a += Σ wᵢ cᵢ cᵢᵀ (lower triangle only).
    fn add_weighted_gram(&self, w: &[f64], a: &mut [f64], n: usize) {
        for (i, &wi) in w.iter().enumerate() {
            let idx = &self.idx[i];
            let val = &self.val[i];
            for p in 0..idx.len() {
                for q in 0..idx.len() {
                    let (r, c) = (idx[p], idx[q]);
                    if c <= r {
                        a[r * n + c] += wi * val[p] * val[q];
                    }
                }
            }
        }
    }
}

/// Dot product with four independent accumulators.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// In-place Cholesky of the lower triangle of a row-major `n×n` matrix
/// (right-looking, so the trailing update is a contiguous axpy per row).
fn cholesky(a: &mut [f64], n: usize) -> bool {
    let mut col = vec![0.0; n];
    for j in 0..n {
        let d = a[j * n + j];
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            a[i * n + j] /= d;
            col[i] = a[i * n + j];
        }
        for i in (j + 1)..n {
            let lij = col[i];
            if lij != 0.0 {
                let row = &mut a[i * n + j + 1..i * n + i + 1];
                for (r, c) in row.iter_mut().zip(&col[j + 1..=i]) {
                    *r -= lij * c;
                }
            }
        }
    }
    true
}

fn cholesky_solve(l: &[f64], n: usize, x: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        let s = dot(row, &x[..i]);
        x[i] = (x[i] - s) / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

/// Largest α ∈ (0, 1] keeping `v + α·dv ≥ 0`.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter().zip(dv).fold(1.0f64, |a, (&v, &d)| if d < 0.0 { a.min(-v / d) } else { a })
}

pub fn solve_qp(qp: &QpProblem) -> Result<QpSolution, QpError> {
    solve_qp_with(qp, &QpSettings::default())
}

pub fn solve_qp_with(qp: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    let n = qp.h.nrows();
    let m = qp.c.nrows();
    if qp.h.ncols() != n || qp.g.len() != n || (m > 0 && qp.c.ncols() != n) || qp.b.len() != m {
        return Err(QpError::Dimension(format!(
            "H {}x{}, g {}, C {}x{}, b {}",
            qp.h.nrows(),
            qp.h.ncols(),
            qp.g.len(),
            qp.c.nrows(),
            qp.c.ncols(),
            qp.b.len()
        )));
    }
    let mut h = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            h[r * n + c] = qp.h[(r, c)];
        }
    }
    let g: Vec<f64> = qp.g.iter().copied().collect();
    let b: Vec<f64> = qp.b.iter().copied().collect();

    if m == 0 {
        let mut l = h.clone();
        if !cholesky(&mut l, n) {
            return Err(QpError::NotPositiveDefinite);
        }
        let mut x: Vec<f64> = g.iter().map(|v| -v).collect();
        cholesky_solve(&l, n, &mut x);
        let x = DVector::from_vec(x);
        let z = DVector::zeros(0);
        let kkt_residual = qp.kkt_residual(&x, &z);
        return Ok(QpSolution { x, z, iterations: 0, kkt_residual, degraded: false });
    }

    let rows = SparseRows::new(&qp.c);
    let g_norm = inf_norm(&g);
    let b_norm = inf_norm(&b);
    let tol = settings.tolerance;

    // Start from the least-squares point of the relaxed KKT system.
    let mut kmat = h.clone();
    rows.add_weighted_gram(&vec![1.0; m], &mut kmat, n);
    if !cholesky(&mut kmat, n) {
        return Err(QpError::NotPositiveDefinite);
    }
    let mut x: Vec<f64> = g.iter().map(|v| -v).collect();
    rows.add_transpose_mul(&b, &mut x);
    cholesky_solve(&kmat, n, &mut x);
    let mut s: Vec<f64> = (0..m).map(|i| b[i] - rows.row_dot(i, &x)).collect();
    let mut z: Vec<f64> = s.iter().map(|v| -v).collect();
    for v in [&mut s, &mut z] {
        let shift = -v.iter().fold(f64::INFINITY, |a, &x| a.min(x));
        if shift >= -1e-8 {
            for e in v.iter_mut() {
                *e += 1.0 + shift;
            }
        }
    }

    let mut r_d = vec![0.0; n];
    let mut r_p = vec![0.0; m];
    let mut rhs = vec![0.0; n];
    let mut dx = vec![0.0; n];
    let mut ds = vec![0.0; m];
    let mut dz = vec![0.0; m];
    let mut dx_a = vec![0.0; n];
    let mut ds_a = vec![0.0; m];
    let mut dz_a = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;

    for iter in 0..settings.max_iterations {
        // Residuals.
        for i in 0..n {
            let row = &h[i * n..(i + 1) * n];
            r_d[i] = row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + g[i];
        }
        rows.add_transpose_mul(&z, &mut r_d);
        for i in 0..m {
            r_p[i] = rows.row_dot(i, &x) + s[i] - b[i];
        }
        let mu = s.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() / m as f64;
        let rd_n = inf_norm(&r_d);
        let rp_n = inf_norm(&r_p);
        let score = (rd_n / (1.0 + g_norm)).max(rp_n / (1.0 + b_norm)).max(mu);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, x.clone(), z.clone()));
        }
        if rd_n <= tol * (1.0 + g_norm) && rp_n <= tol * (1.0 + b_norm) && mu <= tol {
            return Ok(finish(qp, x, z, iter, false));
        }
        if infeasibility_certificate(&rows, &b, &z, n) {
            return Err(QpError::Infeasible { iterations: iter });
        }

        // Normal matrix H + Cᵀ W C with W = Z S⁻¹.
        for i in 0..m {
            w[i] = z[i] / s[i];
        }
        let mut kmat = h.clone();
        rows.add_weighted_gram(&w, &mut kmat, n);
        if !cholesky(&mut kmat, n) {
            break;
        }

        // Predictor.
        newton(&rows, &kmat, n, &r_d, &r_p, &s, &z, None, &mut rhs, &mut dx_a, &mut ds_a, &mut dz_a);
        let a_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a));
        let mu_aff = s
            .iter()
            .zip(&ds_a)
            .zip(z.iter().zip(&dz_a))
            .map(|((s, ds), (z, dz))| (s + a_aff * ds) * (z + a_aff * dz))
            .sum::<f64>()
            / m as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        // Corrector.
        newton(
            &rows,
            &kmat,
            n,
            &r_d,
            &r_p,
            &s,
            &z,
            Some((&ds_a, &dz_a, sigma * mu)),
            &mut rhs,
            &mut dx,
            &mut ds,
            &mut dz,
        );
        let alpha = (0.99 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
        for i in 0..n {
            x[i] += alpha * dx[i];
        }
        for i in 0..m {
            s[i] += alpha * ds[i];
            z[i] += alpha * dz[i];
        }
    }

    let (_, bx, bz) = best.expect("at least one iterate");
    let sol = finish(qp, bx, bz, settings.max_iterations, true);
    if sol.x.iter().any(|v| !v.is_finite()) {
        return Err(QpError::NotPositiveDefinite);
    }
    if qp.max_violation(&sol.x) > 1e-6 * (1.0 + b_norm) {
        return Err(QpError::Infeasible { iterations: settings.max_iterations });
    }
    Err(QpError::MaxIterations(Box::new(sol)))
}

fn finish(qp: &QpProblem, x: Vec<f64>, z: Vec<f64>, iterations: usize, degraded: bool) -> QpSolution {
    let x = DVector::from_vec(x);
    let z = DVector::from_vec(z);
    let kkt_residual = qp.kkt_residual(&x, &z);
    QpSolution { x, z, iterations, kkt_residual, degraded }
}

/// Farkas test on the normalised dual iterate: z ≥ 0, Cᵀz ≈ 0, bᵀz < 0
/// proves `Cx ≤ b` has no solution.
fn infeasibility_certificate(rows: &SparseRows, b: &[f64], z: &[f64], n: usize) -> bool {
    let zn = inf_norm(z);
    if !(zn > 1e6) {
        return false;
    }
    let zh: Vec<f64> = z.iter().map(|v| v / zn).collect();
    let mut ctz = vec![0.0; n];
    rows.add_transpose_mul(&zh, &mut ctz);
    let btz: f64 = b.iter().zip(&zh).map(|(a, b)| a * b).sum();
    btz < -1e-6 && inf_norm(&ctz) < 1e-6 * btz.abs()
}

/// Solves the reduced Newton system for one direction. With `corr` set the
/// complementarity target is `s∘z + Δs_a∘Δz_a − σμ`, otherwise `s∘z`.
#[allow(clippy::too_many_arguments)]
fn newton(
    rows: &SparseRows,
    l: &[f64],
    n: usize,
    r_d: &[f64],
    r_p: &[f64],
    s: &[f64],
    z: &[f64],
    corr: Option<(&[f64], &[f64], f64)>,
    rhs: &mut [f64],
    dx: &mut [f64],
    ds: &mut [f64],
    dz: &mut [f64],
) {
    let m = s.len();
    let r_c = |i: usize| -> f64 {
        let base = s[i] * z[i];
        match corr {
            Some((dsa, dza, target)) => base + dsa[i] * dza[i] - target,
            None => base,
        }
    };
    // rhs = −r_d + Cᵀ S⁻¹ (r_c − Z r_p)
    for i in 0..n {
        rhs[i] = -r_d[i];
    }
    let tmp: Vec<f64> = (0..m).map(|i| (r_c(i) - z[i] * r_p[i]) / s[i]).collect();
    rows.add_transpose_mul(&tmp, rhs);
    dx.copy_from_slice(rhs);
    cholesky_solve(l, n, dx);
    for i in 0..m {
        ds[i] = -r_p[i] - rows.row_dot(i, dx);
        dz[i] = (-r_c(i) - z[i] * ds[i]) / s[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive active-set oracle for strictly convex QPs: tries active
    /// sets in increasing size and returns the first KKT point.
    pub(crate) fn active_set_oracle(qp: &QpProblem) -> Option<DVector<f64>> {
        let n = qp.h.nrows();
        let m = qp.c.nrows();
        let hinv = qp.h.clone().try_inverse()?;
        let x_unc = -&hinv * &qp.g;
        let hct = &hinv * qp.c.transpose();
        let gram = &qp.c * &hct;
        let cx = &qp.c * &x_unc;
        for size in 0..=m.min(n) {
            let mut set: Vec<usize> = (0..size).collect();
            loop {
                let k = set.len();
                let ga = DMatrix::from_fn(k, k, |i, j| gram[(set[i], set[j])]);
                let ra = DVector::from_fn(k, |i, _| cx[set[i]] - qp.b[set[i]]);
                if let Some(lam) = if k == 0 { Some(DVector::zeros(0)) } else { ga.lu().solve(&ra) } {
                    if lam.iter().all(|&l| l >= -1e-10) {
                        let mut x = x_unc.clone();
                        for (p, &i) in set.iter().enumerate() {
                            x -= hct.column(i) * lam[p];
                        }
                        if qp.max_violation(&x) <= 1e-9 {
                            return Some(x);
                        }
                    }
                }
                if !next_combination(&mut set, m) {
                    break;
                }
            }
        }
        None
    }

    fn next_combination(set: &mut [usize], m: usize) -> bool {
        let k = set.len();
        for i in (0..k).rev() {
            if set[i] < m - k + i {
                set[i] += 1;
                for j in i + 1..k {
                    set[j] = set[j - 1] + 1;
                }
                return true;
            }
        }
        false
    }

    pub(crate) fn random_qp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> QpProblem {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
        let g = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
        let c = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let b = &c * x0 + DVector::from_fn(m, |_, _| rng.random_range(0.0..1.0));
        QpProblem { h, g, c, b }
    }

    fn qp1(h: f64, g: f64, c: &[f64], b: &[f64]) -> QpProblem {
        QpProblem {
            h: DMatrix::from_element(1, 1, h),
            g: DVector::from_element(1, g),
            c: DMatrix::from_column_slice(c.len(), 1, c),
            b: DVector::from_column_slice(b),
        }
    }

    #[test]
    fn unconstrained_scalar() {
        let sol = solve_qp(&qp1(1.0, -1.0, &[], &[])).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn active_lower_bound() {
        // x ≥ 2 written as −x ≤ −2
        let sol = solve_qp(&qp1(1.0, 0.0, &[-1.0], &[-2.0])).unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-7);
        assert!(sol.kkt_residual <= 1e-6);
        assert!((sol.z[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn inactive_constraint() {
        let sol = solve_qp(&qp1(1.0, -1.0, &[1.0], &[5.0])).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn infeasible_detected() {
        // x ≤ −1 and x ≥ 1
        let r = solve_qp(&qp1(1.0, 0.0, &[1.0, -1.0], &[-1.0, -1.0]));
        assert!(matches!(r, Err(QpError::Infeasible { .. })), "{r:?}");
    }

    #[test]
    fn not_positive_definite() {
        let r = solve_qp(&qp1(-1.0, 0.0, &[], &[]));
        assert_eq!(r, Err(QpError::NotPositiveDefinite));
    }

    #[test]
    fn dimension_mismatch() {
        let mut qp = qp1(1.0, 0.0, &[1.0], &[1.0]);
        qp.b = DVector::zeros(2);
        assert!(matches!(solve_qp(&qp), Err(QpError::Dimension(_))));
    }

    #[test]
    fn matches_active_set_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let n = rng.random_range(1..=6);
            let m = rng.random_range(0..=8);
            let qp = random_qp(&mut rng, n, m);
            let sol = solve_qp(&qp).unwrap();
            let oracle = active_set_oracle(&qp).expect("oracle solves feasible QP");
            assert!((qp.objective(&sol.x) - qp.objective(&oracle)).abs() < 1e-6);
            assert!((&sol.x - &oracle).amax() < 1e-5);
            assert!(sol.kkt_residual <= 1e-6, "{}", sol.kkt_residual);
        }
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let qp = random_qp(&mut rng, 10, 14);
        let a = solve_qp(&qp).unwrap();
        let b = solve_qp(&qp).unwrap();
        assert_eq!(a.x.as_slice(), b.x.as_slice());
    }

    #[test]
    fn cholesky_matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 9;
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let spd = &a * a.transpose() + DMatrix::identity(n, n);
        let mut flat: Vec<f64> = (0..n * n).map(|k| spd[(k / n, k % n)]).collect();
        assert!(cholesky(&mut flat, n));
        let l = spd.clone().cholesky().unwrap().l();
        for r in 0..n {
            for c in 0..=r {
                assert!((flat[r * n + c] - l[(r, c)]).abs() < 1e-12);
            }
        }
        let rhs = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let mut x: Vec<f64> = rhs.iter().copied().collect();
        cholesky_solve(&flat, n, &mut x);
        let err = (&spd * DVector::from_vec(x) - rhs).amax();
        assert!(err < 1e-12);
    }
}
