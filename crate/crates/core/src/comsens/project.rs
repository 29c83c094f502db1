//! Constrained nearest-matrix subproblems of the cyclic design.
//!
//! Each column is handled independently in real coordinates `[Re x; Im x]`.
//! Affine equalities are eliminated through an SVD null-space basis; the
//! remaining power ball and convex quadratic sets are combined with Dykstra's
//! alternating projections, which converge to the exact projection onto
//! their intersection.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::model::{shift_vec, CMatrix, ComsensProblem};
use crate::error::{Error, Result};

/// Dykstra stops once a sweep moves the iterate by less than this (relative).
const STEP_TOL: f64 = 1e-13;
/// Allowed constraint violation at termination, relative to `p`.
const FEAS_TOL: f64 = 1e-11;
const MAX_SWEEPS: usize = 200_000;
/// Singular values below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-10;

/// Real-linear equalities on one complex column, stored as real rows acting
/// on `[Re x; Im x]`.
struct Equalities {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    dim: usize,
}

impl Equalities {
    fn new(dim: usize) -> Self {
        Self { rows: Vec::new(), rhs: Vec::new(), dim }
    }

    /// Adds `Σ a_i x_i + Σ b_i conj(x_i) = c` as its real and imaginary parts.
    fn push(&mut self, a: &[Complex64], b: &[Complex64], c: Complex64) {
        let n = self.dim;
        let mut re = vec![0.0; 2 * n];
        let mut im = vec![0.0; 2 * n];
        for i in 0..n {
            re[i] = a[i].re + b[i].re;
            re[n + i] = -a[i].im + b[i].im;
            im[i] = a[i].im + b[i].im;
            im[n + i] = a[i].re - b[i].re;
        }
        self.rows.push(re);
        self.rhs.push(c.re);
        self.rows.push(im);
        self.rhs.push(c.im);
    }
}

/// `{w : wᵀAw + 2bᵀw + c ≤ 0}` with `A` PSD, kept in `A`'s eigenbasis.
struct Quadric {
    basis: DMatrix<f64>,
    eig: DVector<f64>,
    b: DVector<f64>,
    c: f64,
}

impl Quadric {
    fn new(a: DMatrix<f64>, b: DVector<f64>, c: f64) -> Self {
        let a = (&a + a.transpose()) * 0.5;
        let se = a.symmetric_eigen();
        let eig = se.eigenvalues.map(|v| v.max(0.0));
        let b = se.eigenvectors.transpose() * b;
        Self { basis: se.eigenvectors, eig, b, c }
    }

    fn value_rotated(&self, w: &DVector<f64>) -> f64 {
        w.iter()
            .zip(self.eig.iter().zip(self.b.iter()))
            .map(|(&wi, (&l, &bi))| l * wi * wi + 2.0 * bi * wi)
            .sum::<f64>()
            + self.c
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        self.value_rotated(&(self.basis.transpose() * w))
    }

    /// Nearest point of the set; `w(λ) = (I + λA)⁻¹(a − λb)` with `λ` found
    /// by bisection on the (monotone) constraint value.
    fn project(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        let at = self.basis.transpose() * a;
        if self.value_rotated(&at) <= 0.0 {
            return Ok(a.clone());
        }
        let point = |lam: f64| {
            DVector::from_fn(at.len(), |i, _| (at[i] - lam * self.b[i]) / (1.0 + lam * self.eig[i]))
        };
        let mut hi = 1.0;
        while self.value_rotated(&point(hi)) > 0.0 {
            hi *= 2.0;
            if hi > 1e30 {
                return Err(Error::Infeasible("quadratic constraint set is empty".into()));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.value_rotated(&point(mid)) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(&self.basis * point(hi))
    }
}

/// Projection of `target` onto `{z : Ez = e, ‖z‖² ≤ p, zᵀS_i z ≤ 2p}`; with
/// `p = ∞` only the equalities remain. Inconsistent equalities (possible only
/// for linearized rows whose gradient vanishes) are met in the least-squares
/// sense.
fn project_column(
    target: &DVector<f64>,
    eq: &Equalities,
    quads: &[DMatrix<f64>],
    p: f64,
) -> Result<DVector<f64>> {
    debug_assert!(quads.is_empty() || p.is_finite());
    let dim = target.len();
    // Particular solution and null-space basis of the equalities.
    let (z0, null) = if eq.rows.is_empty() {
        (DVector::zeros(dim), DMatrix::identity(dim, dim))
    } else {
        let m = eq.rows.len().max(dim);
        let mut a = DMatrix::zeros(m, dim);
        for (r, row) in eq.rows.iter().enumerate() {
            a.row_mut(r).copy_from_slice(row);
        }
        let mut rhs = DVector::zeros(m);
        rhs.rows_mut(0, eq.rhs.len()).copy_from_slice(&eq.rhs);
        let svd = a.clone().svd(true, true);
        let u = svd.u.as_ref().expect("requested U");
        let vt = svd.v_t.as_ref().expect("requested Vᵀ");
        let smax = svd.singular_values.max();
        let mut z0 = DVector::zeros(dim);
        let mut null_cols = Vec::new();
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if smax > 0.0 && s > RANK_TOL * smax {
                z0 += vt.row(i).transpose() * (u.column(i).dot(&rhs) / s);
            } else {
                null_cols.push(vt.row(i).transpose());
            }
        }
        let null = if null_cols.is_empty() {
            DMatrix::zeros(dim, 0)
        } else {
            DMatrix::from_columns(&null_cols)
        };
        (z0, null)
    };

    let r2 = p - z0.norm_squared();
    if r2 < -FEAS_TOL * p {
        return Err(Error::Infeasible("affine constraints miss the power ball".into()));
    }
    let radius = r2.max(0.0).sqrt();
    let quadrics: Vec<Quadric> = quads
        .iter()
        .map(|s| {
            let sn = s * &null;
            Quadric::new(null.transpose() * &sn, null.transpose() * (s * &z0), z0.dot(&(s * &z0)) - 2.0 * p)
        })
        .collect();
    let ball = |w: &DVector<f64>| {
        let n = w.norm();
        if radius.is_finite() && n > radius {
            w * (radius / n)
        } else {
            w.clone()
        }
    };

    let w_target = null.transpose() * target;
    let w = if null.ncols() == 0 {
        w_target
    } else if quadrics.is_empty() {
        ball(&w_target)
    } else {
        // Dykstra over the quadrics then the ball (last, so power holds exactly).
        let sets = quadrics.len() + 1;
        let mut incr = vec![DVector::zeros(w_target.len()); sets];
        let mut w = w_target.clone();
        let mut done = false;
        for _ in 0..MAX_SWEEPS {
            let prev = w.clone();
            for (i, inc) in incr.iter_mut().enumerate() {
                let shifted = &w + &*inc;
                let next = if i < quadrics.len() { quadrics[i].project(&shifted)? } else { ball(&shifted) };
                *inc = shifted - &next;
                w = next;
            }
            let moved = (&w - &prev).norm();
            let viol = quadrics.iter().map(|q| q.value(&w)).fold(0.0, f64::max);
            if moved <= STEP_TOL * (1.0 + w.norm()) && viol <= FEAS_TOL * p {
                done = true;
                break;
            }
        }
        if !done {
            return Err(Error::MaxIterations("projection splitting did not settle".into()));
        }
        w
    };
    for q in &quadrics {
        if q.value(&w) > FEAS_TOL * p * 10.0 {
            return Err(Error::Infeasible("quadratic constraints unreachable".into()));
        }
    }
    Ok(z0 + &null * w)
}

fn to_real(x: impl Iterator<Item = Complex64>, b: usize) -> DVector<f64> {
    let x: Vec<Complex64> = x.collect();
    DVector::from_fn(2 * b, |i, _| if i < b { x[i].re } else { x[i - b].im })
}

fn from_real(z: &DVector<f64>, b: usize) -> Vec<Complex64> {
    (0..b).map(|i| Complex64::new(z[i], z[b + i])).collect()
}

/// Real form `blockdiag(S, S)` of `xᴴSx` for `S = J_m + J_mᵀ + 2I`.
fn auto_quadric(b: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(2 * b, 2 * b, |i, j| {
        if (i < b) != (j < b) {
            return 0.0;
        }
        let (i, j) = (i % b, j % b);
        if i == j {
            2.0
        } else if i.abs_diff(j) == m {
            1.0
        } else {
            0.0
        }
    })
}

/// Cross-correlation equalities `xᴴJ_m y_l = 0` for lags `0..=k`.
fn cross_equalities(eq: &mut Equalities, y: &CMatrix, k: usize) {
    let b = y.nrows();
    let zero = vec![Complex64::new(0.0, 0.0); b];
    for l in 0..y.ncols() {
        for m in 0..=k {
            let jy = shift_vec(y.column(l).iter().copied(), b, m as i64);
            eq.push(&zero, &jy, Complex64::new(0.0, 0.0));
        }
    }
}

fn check_shapes(target: &CMatrix, other: &CMatrix, prob: &ComsensProblem, cols: usize) -> Result<()> {
    if target.shape() != (prob.b, cols) || other.nrows() != prob.b {
        return Err(Error::Dimension(format!(
            "subproblem shapes {:?}/{:?} do not match B = {}",
            target.shape(),
            other.shape(),
            prob.b
        )));
    }
    Ok(())
}

/// Nearest `X` to `x_sigma` with per-column power `≤ p`, zero cross
/// correlation `x_qᴴJ_m y_l = 0` against `y_fixed` for lags `0..=k`, and the
/// convex autocorrelation bounds `x_qᴴ(J_m + J_mᵀ + 2I)x_q ≤ 2p`, `m = 1..=k`.
pub fn solve_x_subproblem(x_sigma: &CMatrix, y_fixed: &CMatrix, prob: &ComsensProblem) -> Result<CMatrix> {
    solve_x(x_sigma, y_fixed, None, prob)
}

/// Nearest `X` under the power and cross-correlation constraints of
/// [`solve_x_subproblem`] plus the autocorrelation equalities
/// `x_qᴴJ_m x_q = 0` (`m = 1..=k`) linearized about `anchor`:
/// `aᴴJ_m x + xᴴJ_m a = aᴴJ_m a`.
///
/// The nonlinear residual of the result is `ΔᴴJ_mΔ` with `Δ = x − a`, so
/// re-anchoring at the output converges to the exact set. The convex
/// autocorrelation bounds are dropped here: once the equalities hold they
/// reduce to the power bound.
pub fn solve_x_subproblem_anchored(
    x_sigma: &CMatrix,
    y_fixed: &CMatrix,
    anchor: &CMatrix,
    prob: &ComsensProblem,
) -> Result<CMatrix> {
    if anchor.shape() != x_sigma.shape() {
        return Err(Error::Dimension("anchor and target shapes differ".into()));
    }
    solve_x(x_sigma, y_fixed, Some(anchor), prob)
}

/// Gauss-Newton restoration onto the exact autocorrelation equalities.
///
/// Each step is the minimum-norm move onto the equalities linearized at the
/// current point (cross correlation against `y_fixed` kept exactly), which
/// converges quadratically. Both constraint families are homogeneous, so the
/// final radial rescale into the power ball preserves them.
pub fn restore_x(x: &CMatrix, y_fixed: &CMatrix, prob: &ComsensProblem, rounds: usize) -> Result<CMatrix> {
    let mut cur = x.clone();
    let unbounded = ComsensProblem { p: f64::INFINITY, ..prob.clone() };
    for _ in 0..rounds {
        cur = solve_x(&cur, y_fixed, Some(&cur), &unbounded)?;
    }
    let radius = prob.p.sqrt();
    for mut col in cur.column_iter_mut() {
        let n = col.norm();
        if n > radius {
            col *= Complex64::new(radius / n, 0.0);
        }
    }
    Ok(cur)
}

fn solve_x(
    x_sigma: &CMatrix,
    y_fixed: &CMatrix,
    anchor: Option<&CMatrix>,
    prob: &ComsensProblem,
) -> Result<CMatrix> {
    check_shapes(x_sigma, y_fixed, prob, prob.n_t)?;
    let b = prob.b;
    let quads: Vec<DMatrix<f64>> = match anchor {
        Some(_) => Vec::new(),
        None => (1..=prob.k).map(|m| auto_quadric(b, m)).collect(),
    };
    let mut out = CMatrix::zeros(b, x_sigma.ncols());
    for q in 0..x_sigma.ncols() {
        let mut eq = Equalities::new(b);
        cross_equalities(&mut eq, y_fixed, prob.k);
        if let Some(anchor) = anchor {
            let a: Vec<Complex64> = anchor.column(q).iter().copied().collect();
            for m in 1..=prob.k as i64 {
                // aᴴJx = Σ conj(a_{i+m}) x_i and xᴴJa = Σ conj(x_i)(Ja)_i.
                let lin: Vec<Complex64> = shift_vec(a.iter().map(|v| v.conj()), b, -m);
                let conj_lin = shift_vec(a.iter().copied(), b, m);
                let rhs: Complex64 = a.iter().zip(&conj_lin).map(|(ai, ji)| ai.conj() * ji).sum();
                eq.push(&lin, &conj_lin, rhs);
            }
        }
        let z = project_column(&to_real(x_sigma.column(q).iter().copied(), b), &eq, &quads, prob.p)?;
        out.column_mut(q).copy_from_slice(&from_real(&z, b));
    }
    Ok(out)
}

/// Nearest `Y` to `y_sigma` with per-column power `≤ p` and zero cross
/// correlation `x_qᴴJ_m y_l = 0` against `x_fixed` for lags `0..=k`.
///
/// The equalities are homogeneous and complex-linear in `y_l`, so the
/// solution is the orthogonal projection onto their null space followed by a
/// radial rescale into the power ball.
pub fn solve_y_subproblem(y_sigma: &CMatrix, x_fixed: &CMatrix, prob: &ComsensProblem) -> Result<CMatrix> {
    check_shapes(y_sigma, x_fixed, prob, prob.n_r)?;
    let b = prob.b;
    // Row (q, m): y ↦ Σ_j conj(x_q[j + m]) y_j.
    let rows = x_fixed.ncols() * (prob.k + 1);
    let mut a = CMatrix::zeros(rows, b);
    for q in 0..x_fixed.ncols() {
        for m in 0..=prob.k {
            let row = shift_vec(x_fixed.column(q).iter().map(|v| v.conj()), b, -(m as i64));
            a.row_mut(q * (prob.k + 1) + m).copy_from_slice(&row);
        }
    }
    let basis = if rows == 0 || a.norm() == 0.0 {
        None
    } else {
        let svd = a.svd(false, true);
        let vt = svd.v_t.expect("requested Vᴴ");
        let smax = svd.singular_values.max();
        let keep: Vec<usize> =
            (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > RANK_TOL * smax).collect();
        Some(vt.select_rows(keep.iter()))
    };
    let radius = prob.p.sqrt();
    let mut out = y_sigma.clone();
    for l in 0..y_sigma.ncols() {
        let mut y = y_sigma.column(l).into_owned();
        if let Some(vt) = &basis {
            y -= vt.adjoint() * (vt * &y);
        }
        let n = y.norm();
        if n > radius {
            y *= Complex64::new(radius / n, 0.0);
        }
        out.column_mut(l).copy_from(&y);
    }
    Ok(out)
}
