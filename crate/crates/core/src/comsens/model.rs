//! Linear-algebra substrate for paired training design: covariance builders,
//! shift matrices, the training MSE and the auxiliary quadratic whose
//! minimizer over `V` recovers it.
//!
//! Vectorization convention: a channel matrix `H` (`n_rx × n_tx`) is stacked
//! column-major, so entry `(r, t)` sits at index `t·n_rx + r`. A training
//! matrix `P` (`B × n_tx`) acts through `P̃ = P ⊗ I_{n_rx}`.

use nalgebra::{Cholesky, DMatrix, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;

/// Covariances of one link direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    /// Channel covariance, `(n_tx·n_rx)` square.
    pub r: CMatrix,
    /// Noise covariance, `(B·n_rx)` square.
    pub m: CMatrix,
    pub n_tx: usize,
    pub n_rx: usize,
}

/// Auxiliary matrix `V = [V₁; V₂]` with `V₁` of size `(n_tx·n_rx)²` and `V₂`
/// of size `(B·n_rx) × (n_tx·n_rx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxMatrix {
    pub v1: CMatrix,
    pub v2: CMatrix,
}

impl AuxMatrix {
    pub fn zeros(link: &LinkModel) -> Self {
        let d = link.r.nrows();
        Self { v1: CMatrix::zeros(d, d), v2: CMatrix::zeros(link.m.nrows(), d) }
    }

    /// The stacked `[V₁; V₂]`.
    pub fn stacked(&self) -> CMatrix {
        let (d, b) = (self.v1.nrows(), self.v2.nrows());
        let mut v = CMatrix::zeros(d + b, self.v1.ncols());
        v.rows_mut(0, d).copy_from(&self.v1);
        v.rows_mut(d, b).copy_from(&self.v2);
        v
    }
}

/// Training pair: downlink `X` (`B × n_T`) and uplink `Y` (`B × n_R`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub x: CMatrix,
    pub y: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComsensProblem {
    /// Training length per antenna.
    pub b: usize,
    pub n_t: usize,
    pub n_r: usize,
    /// Base station to user; trained by `X`.
    pub downlink: LinkModel,
    /// User to base station over the reciprocal channel `Hᵀ`; trained by `Y`.
    pub uplink: LinkModel,
    /// Per-column power bound.
    pub p: f64,
    /// Correlation-zone lag count.
    pub k: usize,
    /// Correlation tolerance used in reports.
    pub eps_corr: f64,
    /// Outer stop threshold on `|ΔMSE|`.
    pub eta: f64,
    /// Inner cycle cap.
    pub mu: usize,
    /// Outer iteration cap.
    pub max_outer: usize,
}

/// Inputs to [`build_problem`]: magnitudes and phases (radians) of the
/// transmit-side, receive-side and temporal-noise correlation coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ComsensSettings {
    pub b: usize,
    pub n_t: usize,
    pub n_r: usize,
    pub k: usize,
    pub rho_rt: f64,
    pub theta_rt: f64,
    pub rho_rr: f64,
    pub theta_rr: f64,
    pub rho_mt: f64,
    pub theta_mt: f64,
    pub eps_corr: f64,
    pub eta: f64,
    pub mu: usize,
    pub max_outer: usize,
}

impl Default for ComsensSettings {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            b: 8,
            n_t: 4,
            n_r: 4,
            k: 4,
            rho_rt: 0.91,
            theta_rt: 0.83 * PI,
            rho_rr: 0.6,
            theta_rr: 0.42 * PI,
            rho_mt: 0.8,
            theta_mt: 0.53 * PI,
            eps_corr: 1e-5,
            eta: 1e-6,
            mu: 20,
            max_outer: 500,
        }
    }
}

impl LinkModel {
    pub fn new(r: CMatrix, m: CMatrix, n_tx: usize, n_rx: usize) -> Result<Self> {
        let link = Self { r, m, n_tx, n_rx };
        link.validate()?;
        Ok(link)
    }

    /// Training length implied by the noise covariance.
    pub fn training_len(&self) -> usize {
        self.m.nrows() / self.n_rx.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_rx == 0 {
            return Err(Error::Dimension("antenna counts must be positive".into()));
        }
        let d = self.n_tx * self.n_rx;
        if self.r.shape() != (d, d) {
            return Err(Error::Dimension(format!(
                "channel covariance is {:?}, expected {d}x{d}",
                self.r.shape()
            )));
        }
        if !self.m.is_square() || self.m.nrows() == 0 || !self.m.nrows().is_multiple_of(self.n_rx) {
            return Err(Error::Dimension(format!(
                "noise covariance is {:?}, expected a multiple of {} square",
                self.m.shape(),
                self.n_rx
            )));
        }
        check_covariance(&self.r, "channel covariance")?;
        check_covariance(&self.m, "noise covariance")
    }

    fn check_training(&self, p: &CMatrix) -> Result<()> {
        let b = self.training_len();
        if p.shape() != (b, self.n_tx) {
            return Err(Error::Dimension(format!(
                "training matrix is {:?}, expected {b}x{}",
                p.shape(),
                self.n_tx
            )));
        }
        Ok(())
    }

    fn check_aux(&self, v: &AuxMatrix) -> Result<()> {
        let d = self.r.nrows();
        if v.v1.shape() != (d, d) || v.v2.shape() != (self.m.nrows(), d) {
            return Err(Error::Dimension(format!(
                "auxiliary blocks are {:?}/{:?}, expected {d}x{d}/{}x{d}",
                v.v1.shape(),
                v.v2.shape(),
                self.m.nrows()
            )));
        }
        Ok(())
    }

    /// `P̃ = P ⊗ I_{n_rx}`.
    pub fn lift(&self, p: &CMatrix) -> Result<CMatrix> {
        self.check_training(p)?;
        Ok(p.kronecker(&CMatrix::identity(self.n_rx, self.n_rx)))
    }

    /// Channel MSE `tr[(R⁻¹ + P̃ᴴM⁻¹P̃)⁻¹]`, evaluated as
    /// `‖G⁻¹Lᴴ‖²_F` with `R = LLᴴ` and `GGᴴ = I + LᴴP̃ᴴM⁻¹P̃L`.
    pub fn mse(&self, p: &CMatrix) -> Result<f64> {
        let w = self.lift(p)?;
        let l = cholesky(&self.r, "channel covariance")?.unpack();
        let m_chol = cholesky(&self.m, "noise covariance")?;
        let wl = &w * &l;
        let m_inv_wl = m_chol.solve(&wl);
        let mut k = wl.adjoint() * m_inv_wl;
        for i in 0..k.nrows() {
            k[(i, i)] += 1.0;
        }
        hermitize(&mut k);
        let g = cholesky(&k, "information matrix")?.unpack();
        let z = g
            .solve_lower_triangular(&l.adjoint())
            .ok_or_else(|| Error::Singular("information matrix factor".into()))?;
        Ok(z.norm_squared())
    }

    /// `Q = [[R, RP̃ᴴ], [P̃R, M + P̃RP̃ᴴ]]`.
    pub fn q_matrix(&self, p: &CMatrix) -> Result<CMatrix> {
        let w = self.lift(p)?;
        let d = self.r.nrows();
        let b = self.m.nrows();
        let wr = &w * &self.r;
        let mut q = CMatrix::zeros(d + b, d + b);
        q.view_mut((0, 0), (d, d)).copy_from(&self.r);
        q.view_mut((d, 0), (b, d)).copy_from(&wr);
        q.view_mut((0, d), (d, b)).copy_from(&wr.adjoint());
        q.view_mut((d, d), (b, b)).copy_from(&(&self.m + &wr * w.adjoint()));
        Ok(q)
    }

    /// `F(V, P) = tr[VᴴQV]`.
    pub fn aux_objective(&self, v: &AuxMatrix, p: &CMatrix) -> Result<f64> {
        self.check_aux(v)?;
        let q = self.q_matrix(p)?;
        let vs = v.stacked();
        Ok((vs.adjoint() * q * vs).trace().re)
    }

    /// Minimizer of `F(·, P)`: `V₁ = I`, `V₂ = −(M + P̃RP̃ᴴ)⁻¹P̃R`.
    pub fn optimal_aux(&self, p: &CMatrix) -> Result<AuxMatrix> {
        let w = self.lift(p)?;
        let wr = &w * &self.r;
        let mut s = &self.m + &wr * w.adjoint();
        hermitize(&mut s);
        let v2 = -cholesky(&s, "M + P̃RP̃ᴴ")?.solve(&wr);
        let d = self.r.nrows();
        Ok(AuxMatrix { v1: CMatrix::identity(d, d), v2 })
    }

    /// Real gradient of `F(V, ·)` at `P`: entry `(b, t)` holds
    /// `∂F/∂Re P_bt + j·∂F/∂Im P_bt`.
    pub fn aux_gradient(&self, v: &AuxMatrix, p: &CMatrix) -> Result<CMatrix> {
        self.check_aux(v)?;
        let w = self.lift(p)?;
        // With respect to P̃: 2·V₂(V₁ᴴ + V₂ᴴP̃)R.
        let gw = (&v.v2 * (v.v1.adjoint() + v.v2.adjoint() * &w) * &self.r) * Complex64::new(2.0, 0.0);
        let n = self.n_rx;
        Ok(CMatrix::from_fn(p.nrows(), p.ncols(), |b, t| {
            (0..n).map(|i| gw[(b * n + i, t * n + i)]).sum()
        }))
    }

    /// Upper bound `L` on the curvature of `F(V, ·)` along any direction, so
    /// `F(V, P + Δ) ≤ F(V, P) + Re⟨∇F, Δ⟩ + (L/2)‖Δ‖²`.
    pub fn curvature_bound(&self, v: &AuxMatrix) -> Result<f64> {
        self.check_aux(v)?;
        let a = &v.v2 * v.v2.adjoint();
        let (b, t, n) = (self.training_len(), self.n_tx, self.n_rx);
        // Quadratic part tr(A·(Δ⊗I)·R·(Δ⊗I)ᴴ) = vec(Δ)ᴴ H vec(Δ).
        let h = CMatrix::from_fn(b * t, b * t, |i, j| {
            let (bi, ti) = (i / t, i % t);
            let (bj, tj) = (j / t, j % t);
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..n {
                for s in 0..n {
                    acc += a[(bi * n + r, bj * n + s)] * self.r[(tj * n + s, ti * n + r)];
                }
            }
            acc
        });
        let lam_max = h.symmetric_eigenvalues().max();
        if !lam_max.is_finite() {
            return Err(Error::Evaluation("curvature estimate is not finite".into()));
        }
        Ok(2.0 * lam_max.max(0.0))
    }

    /// Majorize-minimize target `P − ∇F/L`; `P` itself when `F` does not
    /// depend on `P`.
    pub fn target(&self, v: &AuxMatrix, p: &CMatrix) -> Result<CMatrix> {
        let l = self.curvature_bound(v)?;
        if l == 0.0 {
            self.check_training(p)?;
            return Ok(p.clone());
        }
        Ok(p - self.aux_gradient(v, p)? / Complex64::new(l, 0.0))
    }
}

impl ComsensProblem {
    pub fn validate(&self) -> Result<()> {
        if self.b < 2 {
            return Err(Error::InvalidScenario(format!("training length {} < 2", self.b)));
        }
        if self.k >= self.b {
            return Err(Error::InvalidScenario(format!(
                "correlation zone k = {} must be below B = {}",
                self.k, self.b
            )));
        }
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::InvalidScenario(format!("power bound {} must be positive", self.p)));
        }
        if !(self.eta > 0.0) || !(self.eps_corr > 0.0) || self.mu == 0 || self.max_outer == 0 {
            return Err(Error::InvalidScenario(
                "eta, eps_corr, mu and max_outer must be positive".into(),
            ));
        }
        let dl = &self.downlink;
        let ul = &self.uplink;
        if (dl.n_tx, dl.n_rx) != (self.n_t, self.n_r) || (ul.n_tx, ul.n_rx) != (self.n_r, self.n_t)
        {
            return Err(Error::Dimension("link antenna counts disagree with n_T, n_R".into()));
        }
        dl.validate()?;
        ul.validate()?;
        if dl.training_len() != self.b || ul.training_len() != self.b {
            return Err(Error::Dimension("noise covariances disagree with B".into()));
        }
        for (mat, name) in [(&dl.r, "R"), (&dl.m, "M"), (&ul.r, "uplink R"), (&ul.m, "uplink M")] {
            let tr = mat.trace().re;
            if (tr - 1.0).abs() > TRACE_TOL {
                return Err(Error::InvalidScenario(format!("trace({name}) = {tr}, expected 1")));
            }
        }
        Ok(())
    }

    /// Channel covariance `R` of the downlink.
    pub fn r(&self) -> &CMatrix {
        &self.downlink.r
    }

    /// Noise covariance `M` of the downlink.
    pub fn m(&self) -> &CMatrix {
        &self.downlink.m
    }

    /// Sum of downlink and uplink MSE for a training pair.
    pub fn total_mse(&self, pair: &TrainingPair) -> Result<f64> {
        Ok(self.downlink.mse(&pair.x)? + self.uplink.mse(&pair.y)?)
    }

    /// Condition numbers of the downlink `R` and `M`.
    pub fn condition_numbers(&self) -> (f64, f64) {
        let cond = |a: &CMatrix| {
            let ev = a.symmetric_eigenvalues();
            ev.max() / ev.min()
        };
        (cond(&self.downlink.r), cond(&self.downlink.m))
    }
}

/// Exponential covariance: `C[k][l] = corr^(l−k)` for `k ≤ l`, conjugate
/// symmetric below the diagonal.
pub fn exp_covariance(dim: usize, corr: Complex64) -> Result<CMatrix> {
    if !(corr.norm() < 1.0) {
        return Err(Error::Domain(format!("|corr| = {} must be below 1", corr.norm())));
    }
    Ok(CMatrix::from_fn(dim, dim, |k, l| {
        if k <= l {
            corr.powi((l - k) as i32)
        } else {
            corr.powi((k - l) as i32).conj()
        }
    }))
}

/// Builds the Kronecker-model problem: `R = R_Tᵀ ⊗ R_R`, `M = M_Tᵀ ⊗ R_R`
/// for the downlink, `R_R ⊗ R_Tᵀ` and `M_Tᵀ ⊗ R_Tᵀ` for the reciprocal
/// uplink, every covariance scaled to unit trace, and power `p = B`.
pub fn build_problem(s: &ComsensSettings) -> Result<ComsensProblem> {
    let coef = |rho: f64, theta: f64| Complex64::from_polar(rho, -theta);
    let r_t = exp_covariance(s.n_t, coef(s.rho_rt, s.theta_rt))?;
    let r_r = exp_covariance(s.n_r, coef(s.rho_rr, s.theta_rr))?;
    let m_t = exp_covariance(s.b, coef(s.rho_mt, s.theta_mt))?;
    let normalized = |a: CMatrix| {
        let tr = a.trace().re;
        a / Complex64::new(tr, 0.0)
    };
    let downlink = LinkModel::new(
        normalized(r_t.transpose().kronecker(&r_r)),
        normalized(m_t.transpose().kronecker(&r_r)),
        s.n_t,
        s.n_r,
    )?;
    let uplink = LinkModel::new(
        normalized(r_r.kronecker(&r_t.transpose())),
        normalized(m_t.transpose().kronecker(&r_t.transpose())),
        s.n_r,
        s.n_t,
    )?;
    let prob = ComsensProblem {
        b: s.b,
        n_t: s.n_t,
        n_r: s.n_r,
        downlink,
        uplink,
        p: s.b as f64,
        k: s.k,
        eps_corr: s.eps_corr,
        eta: s.eta,
        mu: s.mu,
        max_outer: s.max_outer,
    };
    prob.validate()?;
    Ok(prob)
}

/// Shift matrix `J_lag` with ones on the `lag`-th subdiagonal, so
/// `(J_lag·y)[i] = y[i − lag]`; negative lags give the transpose.
pub fn shift_matrix(b: usize, lag: i64) -> Result<DMatrix<f64>> {
    check_lag(b, lag)?;
    Ok(DMatrix::from_fn(b, b, |i, j| if i as i64 - j as i64 == lag { 1.0 } else { 0.0 }))
}

/// `J_lag·y` without forming the shift matrix.
pub fn shift_vec<'a>(
    y: impl Iterator<Item = Complex64> + 'a,
    b: usize,
    lag: i64,
) -> Vec<Complex64> {
    let y: Vec<Complex64> = y.collect();
    (0..b as i64)
        .map(|i| {
            let j = i - lag;
            if (0..b as i64).contains(&j) {
                y[j as usize]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect()
}

/// Correlation matrix `Aᴴ·J_lag·B₂` between the columns of two `B`-row
/// sequences.
pub fn correlation(a: &CMatrix, b2: &CMatrix, lag: i64) -> Result<CMatrix> {
    if a.nrows() != b2.nrows() {
        return Err(Error::Dimension(format!(
            "sequences have {} and {} rows",
            a.nrows(),
            b2.nrows()
        )));
    }
    let b = a.nrows();
    check_lag(b, lag)?;
    let mut shifted = CMatrix::zeros(b, b2.ncols());
    for c in 0..b2.ncols() {
        let col = shift_vec(b2.column(c).iter().copied(), b, lag);
        shifted.column_mut(c).copy_from_slice(&col);
    }
    Ok(a.adjoint() * shifted)
}

/// `20·log₁₀|·|` of [`correlation`]; exact zeros map to `-inf`.
pub fn correlation_db(a: &CMatrix, b2: &CMatrix, lag: i64) -> Result<DMatrix<f64>> {
    Ok(correlation(a, b2, lag)?.map(|c| 20.0 * c.norm().log10()))
}

fn check_lag(b: usize, lag: i64) -> Result<()> {
    if lag.unsigned_abs() as usize >= b {
        return Err(Error::Domain(format!("|lag| = {} must be below B = {b}", lag.abs())));
    }
    Ok(())
}

fn check_covariance(a: &CMatrix, name: &str) -> Result<()> {
    let scale = a.iter().map(|c| c.norm()).fold(1.0, f64::max);
    let asym = (a - a.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
    if asym > HERMITIAN_TOL * scale {
        return Err(Error::InvalidScenario(format!("{name} is not Hermitian (gap {asym:e})")));
    }
    let min_eig = a.clone().symmetric_eigenvalues().min();
    if !(min_eig > 0.0) {
        return Err(Error::Singular(format!("{name} has minimum eigenvalue {min_eig:e}")));
    }
    Ok(())
}

fn cholesky(a: &CMatrix, name: &str) -> Result<Cholesky<Complex64, Dyn>> {
    Cholesky::new(a.clone())
        .ok_or_else(|| Error::Singular(format!("{name} is not numerically positive definite")))
}

fn hermitize(a: &mut CMatrix) {
    let sym = (&*a + a.adjoint()) * Complex64::new(0.5, 0.0);
    *a = sym;
}

/// Downlink channel MSE of `X`.
pub fn channel_mse(x: &CMatrix, prob: &ComsensProblem) -> Result<f64> {
    prob.downlink.mse(x)
}

/// Downlink auxiliary objective `tr[VᴴQV]`.
pub fn aux_objective(v: &AuxMatrix, x: &CMatrix, prob: &ComsensProblem) -> Result<f64> {
    prob.downlink.aux_objective(v, x)
}

/// Downlink auxiliary minimizer.
pub fn optimal_aux(x: &CMatrix, prob: &ComsensProblem) -> Result<AuxMatrix> {
    prob.downlink.optimal_aux(x)
}
