//! Cyclic minimization of the training MSE over the pair `(X, Y)`.
//!
//! Outer iterations refresh the auxiliary matrices `V` at the current pair
//! (which makes `F(V, ·)` touch the MSE there); inner cycles take
//! majorize-minimize steps on `F(V, ·)`: a gradient target followed by the
//! constrained nearest-matrix subproblems for `X` and then `Y`.

use num_complex::Complex64;

use super::model::{correlation, AuxMatrix, CMatrix, ComsensProblem, TrainingPair};
use super::project::{restore_x, solve_x_subproblem_anchored, solve_y_subproblem};
use crate::error::{Error, Result};
use crate::specfun::McOracle;

/// Slack allowed on MSE increases before a step counts as non-monotone.
pub const MONOTONE_SLACK: f64 = 1e-8;
/// Re-linearizations of the autocorrelation equalities per `X` update.
const RELINEARIZE_ROUNDS: usize = 3;
/// Cap on restoration steps, and the residual (relative to `p`) they target.
const RESTORE_ROUNDS: usize = 40;
const RESTORE_TOL: f64 = 1e-14;
/// Smallest fraction of the majorize-minimize step tried before an inner
/// cycle is abandoned.
const STEP_MIN: f64 = 0.125;
/// Cap on the outer extrapolation length.
const REACH_MAX: f64 = 64.0;

/// Auxiliary matrices of both links.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxPair {
    pub downlink: AuxMatrix,
    pub uplink: AuxMatrix,
}

impl AuxPair {
    pub fn optimal(pair: &TrainingPair, prob: &ComsensProblem) -> Result<Self> {
        Ok(Self {
            downlink: prob.downlink.optimal_aux(&pair.x)?,
            uplink: prob.uplink.optimal_aux(&pair.y)?,
        })
    }

    /// `F(V, P)` summed over both links.
    pub fn objective(&self, pair: &TrainingPair, prob: &ComsensProblem) -> Result<f64> {
        Ok(prob.downlink.aux_objective(&self.downlink, &pair.x)?
            + prob.uplink.aux_objective(&self.uplink, &pair.y)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConstraintResiduals {
    /// `max(‖column‖² − p, 0)` over all columns of `X` and `Y`.
    pub power_excess: f64,
    /// `max |x_qᴴJ_m y_l|` over lags `0..=k`.
    pub cross_max: f64,
    /// `max |x_qᴴJ_m x_q|` over lags `1..=k`.
    pub auto_max: f64,
}

impl ConstraintResiduals {
    pub fn of(pair: &TrainingPair, prob: &ComsensProblem) -> Result<Self> {
        let power_excess = pair
            .x
            .column_iter()
            .chain(pair.y.column_iter())
            .map(|c| (c.norm_squared() - prob.p).max(0.0))
            .fold(0.0, f64::max);
        let mut cross_max: f64 = 0.0;
        let mut auto_max: f64 = 0.0;
        for m in 0..=prob.k as i64 {
            let c = correlation(&pair.x, &pair.y, m)?;
            cross_max = c.iter().map(|v| v.norm()).fold(cross_max, f64::max);
            if m > 0 {
                let a = correlation(&pair.x, &pair.x, m)?;
                auto_max = a.diagonal().iter().map(|v| v.norm()).fold(auto_max, f64::max);
            }
        }
        Ok(Self { power_excess, cross_max, auto_max })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DesignTrace {
    /// MSE before the first and after every outer iteration.
    pub outer_mse: Vec<f64>,
    /// `‖X − X_Σ‖² + ‖Y − Y_Σ‖²` for every accepted inner cycle.
    pub inner_objective: Vec<f64>,
    /// Residuals after every outer iteration.
    pub constraint_residuals: Vec<ConstraintResiduals>,
    pub converged: bool,
    /// Outer iterations performed.
    pub iterations: usize,
    /// Outer steps whose MSE rose by more than [`MONOTONE_SLACK`].
    pub non_monotone_steps: usize,
}

/// One line of the correlation report.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationEntry {
    pub lag: i64,
    /// `xx`, `yy` or `xy` with column indices, e.g. `x0y2`.
    pub pair: String,
    pub magnitude_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub pair: TrainingPair,
    pub trace: DesignTrace,
    pub final_mse: f64,
    pub correlation_report: Vec<CorrelationEntry>,
}

/// Majorize-minimize targets `(X_Σ, Y_Σ)` for `F(V, ·)` at the current pair.
pub fn target_matrices(
    pair: &TrainingPair,
    aux: &AuxPair,
    prob: &ComsensProblem,
) -> Result<(CMatrix, CMatrix)> {
    Ok((
        prob.downlink.target(&aux.downlink, &pair.x)?,
        prob.uplink.target(&aux.uplink, &pair.y)?,
    ))
}

/// Seeded starting pair.
///
/// `X` column `q` is a single pulse of energy `p` with a random phase at row
/// `q mod s`, where the first `s = ⌈B/2⌉` rows are reserved for `X`; `Y` is
/// standard complex Gaussian on the remaining rows, projected onto the cross
/// correlation equalities against `X` and scaled to norm `√p`. Pulses have
/// zero autocorrelation at every nonzero lag, and since `Y` starts after the
/// last pulse, every nonnegative-lag cross correlation vanishes.
pub fn initial_pair(prob: &ComsensProblem, seed: u64) -> Result<TrainingPair> {
    prob.validate()?;
    let rng = McOracle::new(seed, 1)?;
    let (b, root_p) = (prob.b, prob.p.sqrt());
    let s = b.div_ceil(2);
    let mut x = CMatrix::zeros(b, prob.n_t);
    for q in 0..prob.n_t {
        let phase = std::f64::consts::TAU * rng.uniform(q as u64);
        x[(q % s, q)] = Complex64::from_polar(root_p, phase);
    }
    let offset = prob.n_t as u64;
    let gauss = |i: u64| {
        // Box-Muller on two uniforms: unit-variance complex Gaussian.
        let u1 = rng.uniform(offset + 2 * i);
        let u2 = rng.uniform(offset + 2 * i + 1);
        Complex64::from_polar((-u1.ln()).sqrt(), std::f64::consts::TAU * u2)
    };
    let mut y = CMatrix::from_fn(b, prob.n_r, |i, l| {
        if i < s {
            Complex64::new(0.0, 0.0)
        } else {
            gauss((l * b + i) as u64)
        }
    });
    for mut col in y.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col *= Complex64::new(root_p / n, 0.0);
        }
    }
    let y = solve_y_subproblem(&y, &x, prob)?;
    Ok(TrainingPair { x, y })
}

/// Constrained update of `X` toward `target`.
///
/// A few rounds re-linearize the autocorrelation equalities about the latest
/// iterate; the remaining residual is then removed by Gauss-Newton restoration
/// (see [`restore_x`]), which moves the point only slightly; it converges
/// quadratically at regular points and linearly where the zero set is singular
/// (columns close to a single pulse).
fn update_x(target: &CMatrix, y: &CMatrix, x: &CMatrix, prob: &ComsensProblem) -> Result<CMatrix> {
    let mut cur = x.clone();
    for _ in 0..RELINEARIZE_ROUNDS {
        let next = solve_x_subproblem_anchored(target, y, &cur, prob)?;
        let moved = (&next - &cur).norm();
        cur = next;
        if moved <= 1e-12 * (1.0 + cur.norm()) {
            break;
        }
    }
    for _ in 0..RESTORE_ROUNDS {
        if auto_residual(&cur, prob.k)? <= RESTORE_TOL * prob.p {
            break;
        }
        cur = restore_x(&cur, y, prob, 1)?;
    }
    Ok(cur)
}

/// `max |x_qᴴJ_m x_q|` over lags `1..=k`.
fn auto_residual(x: &CMatrix, k: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for m in 1..=k as i64 {
        let a = correlation(x, x, m)?;
        worst = a.diagonal().iter().map(|v| v.norm()).fold(worst, f64::max);
    }
    Ok(worst)
}

/// Treats an infeasible linearization (possible for long steps near the
/// singular part of the autocorrelation zero set) as a rejected candidate.
fn candidate<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Infeasible(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// One inner cycle with both updates moving `frac` of the majorize-minimize
/// step. Returns the candidate, `F(V, ·)` there and
/// `‖X − X_Σ‖² + ‖Y − Y_Σ‖²`.
fn inner_step(
    pair: &TrainingPair,
    aux: &AuxPair,
    prob: &ComsensProblem,
    frac: f64,
) -> Result<(TrainingPair, f64, f64)> {
    let (xs_full, ys_full) = target_matrices(pair, aux, prob)?;
    let c = Complex64::new(frac, 0.0);
    let xs = &pair.x + (xs_full - &pair.x) * c;
    let ys = &pair.y + (ys_full - &pair.y) * c;
    let x = update_x(&xs, &pair.y, &pair.x, prob)?;
    let y = solve_y_subproblem(&ys, &x, prob)?;
    let cand = TrainingPair { x, y };
    let f = aux.objective(&cand, prob)?;
    let dist = (&cand.x - &xs).norm_squared() + (&cand.y - &ys).norm_squared();
    Ok((cand, f, dist))
}

/// Runs the cyclic design from the seeded starting pair.
pub fn design(prob: &ComsensProblem, seed: u64) -> Result<DesignResult> {
    let start = initial_pair(prob, seed)?;
    design_from(prob, start)
}

/// Runs the cyclic design from a given feasible pair.
pub fn design_from(prob: &ComsensProblem, start: TrainingPair) -> Result<DesignResult> {
    prob.validate()?;
    let mut pair = start;
    let mut mse = prob.total_mse(&pair)?;
    let mut trace = DesignTrace { outer_mse: vec![mse], ..DesignTrace::default() };

    // Extrapolation length for the outer acceleration.
    let mut reach = 1.0;
    for _ in 0..prob.max_outer {
        let outer_start = pair.clone();
        let aux = AuxPair::optimal(&pair, prob)?;
        let mut f = aux.objective(&pair, prob)?;
        for _ in 0..prob.mu {
            let mut accepted = None;
            let mut frac = 1.0;
            while frac >= STEP_MIN {
                if let Some(cand) = candidate(inner_step(&pair, &aux, prob, frac))? {
                    if cand.1 <= f {
                        accepted = Some(cand);
                        break;
                    }
                }
                frac *= 0.5;
            }
            let Some((cand, f_new, dist)) = accepted else { break };
            trace.inner_objective.push(dist);
            let gain = f - f_new;
            pair = cand;
            f = f_new;
            if gain <= 0.01 * prob.eta {
                break;
            }
        }
        let mut new_mse = prob.total_mse(&pair)?;
        // The alternation between V and P converges linearly, creeping along
        // shallow valleys. Extrapolate the outer-iteration move, restore
        // feasibility, and keep the result only if the MSE drops.
        let r = Complex64::new(reach, 0.0);
        let dx = &pair.x - &outer_start.x;
        let dy = &pair.y - &outer_start.y;
        if dx.norm() + dy.norm() > 0.0 {
            let ext = candidate(update_x(&(&pair.x + dx * r), &pair.y, &pair.x, prob).and_then(|x| {
                let y = solve_y_subproblem(&(&pair.y + dy * r), &x, prob)?;
                Ok(TrainingPair { x, y })
            }))?;
            let ext_mse = match &ext {
                Some(ext) => prob.total_mse(ext)?,
                None => f64::INFINITY,
            };
            if let (Some(ext), true) = (ext, ext_mse < new_mse) {
                pair = ext;
                new_mse = ext_mse;
                reach = (reach * 2.0).min(REACH_MAX);
            } else {
                reach = (reach * 0.5).max(1.0);
            }
        }
        trace.iterations += 1;
        trace.constraint_residuals.push(ConstraintResiduals::of(&pair, prob)?);
        trace.outer_mse.push(new_mse);
        if new_mse > mse + MONOTONE_SLACK {
            trace.non_monotone_steps += 1;
        }
        let delta = (new_mse - mse).abs();
        mse = new_mse;
        if delta < prob.eta {
            trace.converged = true;
            break;
        }
    }
    if !mse.is_finite() {
        return Err(Error::Evaluation("design produced a non-finite MSE".into()));
    }
    let correlation_report = correlation_report(&pair)?;
    Ok(DesignResult { pair, trace, final_mse: mse, correlation_report })
}

/// Correlation magnitudes in dB over lags `−(B−1)..=B−1` for every column
/// pair of `X` with `X`, `Y` with `Y`, and `X` with `Y`.
pub fn correlation_report(pair: &TrainingPair) -> Result<Vec<CorrelationEntry>> {
    let b = pair.x.nrows() as i64;
    let mut out = Vec::new();
    for lag in -(b - 1)..b {
        for (a, bb, na, nb) in [
            (&pair.x, &pair.x, 'x', 'x'),
            (&pair.y, &pair.y, 'y', 'y'),
            (&pair.x, &pair.y, 'x', 'y'),
        ] {
            let c = correlation(a, bb, lag)?;
            for i in 0..c.nrows() {
                for j in 0..c.ncols() {
                    out.push(CorrelationEntry {
                        lag,
                        pair: format!("{na}{i}{nb}{j}"),
                        magnitude_db: 20.0 * c[(i, j)].norm().log10(),
                    });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comsens::model::{build_problem, ComsensSettings};

    #[test]
    fn initial_pair_is_feasible() {
        let prob = build_problem(&ComsensSettings::default()).unwrap();
        let pair = initial_pair(&prob, 7).unwrap();
        let r = ConstraintResiduals::of(&pair, &prob).unwrap();
        assert!(r.power_excess <= 1e-12);
        assert!(r.cross_max <= 1e-12);
        assert!(r.auto_max <= 1e-12);
        assert!(pair.y.norm() > 0.0);
    }

    #[test]
    fn small_design_is_monotone_and_feasible() {
        let prob = build_problem(&ComsensSettings { b: 6, n_t: 2, n_r: 2, k: 2, ..Default::default() })
            .unwrap();
        let res = design(&prob, 3).unwrap();
        assert!(res.trace.converged);
        for w in res.trace.outer_mse.windows(2) {
            assert!(w[1] <= w[0] + MONOTONE_SLACK);
        }
        let r = ConstraintResiduals::of(&res.pair, &prob).unwrap();
        assert!(r.power_excess <= 1e-8 && r.cross_max <= 1e-4 && r.auto_max <= 1e-4, "{r:?}");
        assert!(res.final_mse < res.trace.outer_mse[0]);
    }
}
