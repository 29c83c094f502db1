//! Pilot-overhead optimization.
//!
//! The finite-blocklength objective is maximized over the pilot fraction `α`
//! either continuously (global grid scan, then golden-section refinement) or
//! over integer pilot counts. The same machinery applied to the ergodic
//! objective gives the baseline that ignores the blocklength penalty.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fading::{total_error_var, FadingKind, PilotScenario};
use crate::format::format_g;
use crate::rate::{db_to_linear, ergodic_rate, finite_block_rate, RateBreakdown};
use crate::specfun::Quadrature;

/// Points in the global scan that seeds golden-section refinement.
pub const GRID_POINTS: usize = 512;
/// Golden-section stopping width on `α`.
pub const ALPHA_TOL: f64 = 1e-6;
/// Rates within this distance of the best count as ties; the smallest `α` wins.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlphaMode {
    ContinuousAlpha,
    /// `αn` restricted to integers `1..n−1`.
    IntegerPilots,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadSolution {
    pub alpha_opt: f64,
    pub rate_opt: f64,
    pub alpha_baseline: f64,
    pub rate_at_baseline: f64,
    /// `100·(rate_opt − rate_at_baseline)/rate_at_baseline`; `inf` when the
    /// baseline rate is zero and the optimum is not, 0 when both are zero.
    pub gain_percent: f64,
    pub mode: AlphaMode,
    /// Breakdown of the finite-blocklength rate at `alpha_opt`.
    pub breakdown: RateBreakdown,
}

impl OverheadSolution {
    /// Estimation error or rate was clamped at the optimum.
    pub fn clamped(&self) -> bool {
        self.breakdown.error_clamped || self.breakdown.negative
    }
}

/// Maximizes `objective` over the admissible pilot fractions of a length-`n`
/// packet. Returns `(α, value)`. Infeasible points evaluate to `-inf`.
fn maximize<F>(n: u32, mode: AlphaMode, objective: F) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let nf = f64::from(n);
    match mode {
        AlphaMode::IntegerPilots => {
            let mut best: Option<(f64, f64)> = None;
            for nt in 1..n {
                let a = f64::from(nt) / nf;
                let v = objective(a)?;
                if best.is_none_or(|(_, bv)| v > bv + TIE_TOL) {
                    best = Some((a, v));
                }
            }
            best.ok_or_else(|| Error::InvalidScenario(format!("no pilot count fits n = {n}")))
        }
        AlphaMode::ContinuousAlpha => {
            let lo = 1.0 / nf;
            let hi = 1.0 - 1e-9;
            let step = (hi - lo) / (GRID_POINTS - 1) as f64;
            let grid: Vec<f64> = (0..GRID_POINTS)
                .map(|i| if i + 1 == GRID_POINTS { hi } else { lo + i as f64 * step })
                .collect();
            let values = grid.iter().map(|&a| objective(a)).collect::<Result<Vec<_>>>()?;
            let mut best_idx = 0;
            for (i, &v) in values.iter().enumerate() {
                if v > values[best_idx] + TIE_TOL {
                    best_idx = i;
                }
            }
            let left = grid[best_idx.saturating_sub(1)];
            let right = grid[(best_idx + 1).min(GRID_POINTS - 1)];
            let (ga, gv) = golden_section(&objective, left, right)?;
            if gv > values[best_idx] + TIE_TOL {
                Ok((ga, gv))
            } else {
                Ok((grid[best_idx], values[best_idx]))
            }
        }
    }
}

/// Golden-section maximization on `[a, b]` down to width [`ALPHA_TOL`].
fn golden_section<F>(f: &F, mut a: f64, mut b: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > ALPHA_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

/// Ergodic objective; `-inf` where the estimation error is clamped.
fn ergodic_objective(s: &PilotScenario, alpha: f64) -> Result<f64> {
    let s = s.with_alpha(alpha)?;
    if total_error_var(&s)?.clamped {
        return Ok(f64::NEG_INFINITY);
    }
    ergodic_rate(&s)
}

/// Pilot fraction maximizing the ergodic rate `(1 − α)C(ρ_eff)`.
pub fn optimize_alpha_ergodic(s: &PilotScenario, mode: AlphaMode) -> Result<(f64, f64)> {
    s.validate()?;
    let (a, v) = maximize(s.n, mode, |a| ergodic_objective(s, a))?;
    if v == f64::NEG_INFINITY {
        return Err(Error::AllInfeasible);
    }
    Ok((a, v))
}

/// Pilot fraction maximizing the finite-blocklength rate, with the ergodic
/// baseline evaluated under the same objective for comparison.
///
/// The search runs on the raw (possibly negative) rate, which keeps a slope
/// where the clamped rate is flat; pilot fractions with a clamped estimation
/// error score `-inf`. If the best rate is not positive the scenario is
/// reported as [`Error::AllInfeasible`]: a raw maximum below zero sits at the
/// degenerate `α → 1` end where both rate terms vanish.
pub fn optimize_alpha(
    s: &PilotScenario,
    mode: AlphaMode,
    quad: &Quadrature,
) -> Result<OverheadSolution> {
    s.validate()?;
    let eval = |a: f64| finite_block_rate(&s.with_alpha(a)?, quad);
    let objective = |a: f64| {
        let r = eval(a)?;
        Ok(if r.error_clamped { f64::NEG_INFINITY } else { r.raw_rate_bits })
    };
    let (mut alpha_opt, mut best_raw) = maximize(s.n, mode, objective)?;
    if best_raw <= 0.0 {
        return Err(Error::AllInfeasible);
    }

    let (alpha_baseline, _) = optimize_alpha_ergodic(s, mode)?;
    let at_baseline = eval(alpha_baseline)?;
    // The baseline is itself a candidate; keep whichever is better.
    if at_baseline.raw_rate_bits > best_raw
        || (at_baseline.raw_rate_bits == best_raw && alpha_baseline < alpha_opt)
    {
        alpha_opt = alpha_baseline;
        best_raw = at_baseline.raw_rate_bits;
    }
    debug_assert!(best_raw.is_finite());
    let breakdown = eval(alpha_opt)?;
    let rate_opt = breakdown.rate_bits;
    let rate_at_baseline = at_baseline.rate_bits;
    let gain_percent = if rate_at_baseline > 0.0 {
        100.0 * (rate_opt - rate_at_baseline) / rate_at_baseline
    } else if rate_opt > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(OverheadSolution {
        alpha_opt,
        rate_opt,
        alpha_baseline,
        rate_at_baseline,
        gain_percent,
        mode,
        breakdown,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweptParameter {
    Epsilon,
    N,
    SnrDb,
    FD,
}

impl SweptParameter {
    pub fn name(self) -> &'static str {
        match self {
            Self::Epsilon => "epsilon",
            Self::N => "n",
            Self::SnrDb => "snr_db",
            Self::FD => "f_d",
        }
    }
}

impl std::str::FromStr for SweptParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon" => Ok(Self::Epsilon),
            "n" => Ok(Self::N),
            "snr_db" => Ok(Self::SnrDb),
            "f_d" | "fd" => Ok(Self::FD),
            other => Err(Error::Parse(format!(
                "unknown swept parameter '{other}' (expected epsilon, n, snr_db or f_d)"
            ))),
        }
    }
}

/// A one-parameter sweep around a template scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub swept_parameter: SweptParameter,
    pub grid: Vec<f64>,
    pub base: PilotScenario,
    pub mode: AlphaMode,
}

impl SweepSpec {
    /// Scenario for one grid value. `α` is reset to one pilot symbol since
    /// the optimizer does not read it.
    pub fn scenario_at(&self, value: f64) -> Result<PilotScenario> {
        let mut s = self.base;
        match self.swept_parameter {
            SweptParameter::Epsilon => s.epsilon = value,
            SweptParameter::N => {
                if value.fract() != 0.0 || !(2.0..=f64::from(u32::MAX)).contains(&value) {
                    return Err(Error::InvalidScenario(format!(
                        "packet length must be an integer >= 2, got {value}"
                    )));
                }
                s.n = value as u32;
            }
            SweptParameter::SnrDb => s.rho = db_to_linear(value),
            SweptParameter::FD => s.f_d = value,
        }
        s.alpha = s.min_alpha();
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidScenario("sweep grid is empty".into()));
        }
        let increasing = self.grid.windows(2).all(|w| w[0] < w[1]);
        let decreasing = self.grid.windows(2).all(|w| w[0] > w[1]);
        if !(increasing || decreasing) {
            return Err(Error::InvalidScenario("sweep grid must be strictly monotone".into()));
        }
        if self.swept_parameter == SweptParameter::FD && self.base.fading == FadingKind::Block {
            return Err(Error::InvalidScenario(
                "sweeping f_d needs a continuous-fading template".into(),
            ));
        }
        for &v in &self.grid {
            self.scenario_at(v)?;
        }
        Ok(())
    }
}

/// One sweep row; `solution` is `None` when every pilot fraction was infeasible.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub swept_value: f64,
    pub solution: Option<OverheadSolution>,
}

/// Evaluates every grid point independently; rows come back in grid order.
pub fn run_sweep(spec: &SweepSpec, quad: &Quadrature) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    spec.grid
        .par_iter()
        .map(|&v| {
            let s = spec.scenario_at(v)?;
            match optimize_alpha(&s, spec.mode, quad) {
                Ok(sol) => Ok(SweepRow {
                    swept_value: v,
                    solution: Some(sol),
                }),
                Err(Error::AllInfeasible) => Ok(SweepRow {
                    swept_value: v,
                    solution: None,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "swept_parameter,swept_value,alpha_opt,alpha_baseline,rate_opt,rate_at_baseline,gain_percent,clamped_flag";

/// Renders sweep rows as CSV (12 significant digits, `\n` line ends).
/// Infeasible rows carry `nan` in every numeric column and `clamped_flag = 1`.
pub fn sweep_csv(parameter: SweptParameter, rows: &[SweepRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    for row in rows {
        let g = |x: f64| format_g(x, 12);
        let fields = match &row.solution {
            Some(s) => [
                g(s.alpha_opt),
                g(s.alpha_baseline),
                g(s.rate_opt),
                g(s.rate_at_baseline),
                g(s.gain_percent),
                u8::from(s.clamped()).to_string(),
            ],
            None => [
                "nan".into(),
                "nan".into(),
                "nan".into(),
                "nan".into(),
                "nan".into(),
                "1".into(),
            ],
        };
        out.push_str(parameter.name());
        out.push(',');
        out.push_str(&g(row.swept_value));
        for f in fields {
            out.push(',');
            out.push_str(&f);
        }
        out.push('\n');
    }
    out
}
