//! Special functions and expectation machinery.
//!
//! Everything downstream needs expectations of smooth functions of a
//! unit-rate exponential variable `T = |h|²` (Rayleigh power gain). Two
//! independent routes are provided: a deterministic [`Quadrature`] and a
//! seeded Monte-Carlo estimator ([`McOracle`]) that serves as the test oracle.
//!
//! # Random number generator
//!
//! [`McOracle`] uses SplitMix64 in counter mode. The `i`-th raw word
//! (`i = 0, 1, ...`) is
//!
//! ```text
//! z = seed + (i + 1) * 0x9E3779B97F4A7C15          (wrapping)
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9         (wrapping)
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB         (wrapping)
//! z =  z ^ (z >> 31)
//! ```
//!
//! and is mapped to a uniform `u = ((z >> 11) + 0.5) * 2^-53` in `(0, 1)`,
//! then to an exponential draw `t = -ln(u)`.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `log2(e)`.
pub const LOG2_E: f64 = 1.0 / LN_2;

/// Exponential integral `E1(x) = ∫₁^∞ e^(−x t)/t dt` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    check_e1_arg(x)?;
    if x < 1.0 {
        Ok(e1_series(x))
    } else {
        Ok(e1_scaled_cf(x) * (-x).exp())
    }
}

/// `e^x · E1(x)`, evaluated without overflow for large `x`.
///
/// Needed for `e^(1/ρ) E1(1/ρ)` at small SNR where both factors alone
/// leave the f64 range.
pub fn exp_scaled_e1(x: f64) -> Result<f64> {
    check_e1_arg(x)?;
    if x < 1.0 {
        Ok(x.exp() * e1_series(x))
    } else {
        Ok(e1_scaled_cf(x))
    }
}

fn check_e1_arg(x: f64) -> Result<()> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::Domain(format!("E1 requires finite x > 0, got {x}")));
    }
    Ok(())
}

/// Power series `−γ − ln x + Σ (−1)^(k+1) x^k / (k·k!)`, used for `x < 1`.
fn e1_series(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0; // x^k / k!
    for k in 1..200 {
        let kf = k as f64;
        term *= x / kf;
        let contrib = term / kf;
        if k % 2 == 1 {
            sum += contrib;
        } else {
            sum -= contrib;
        }
        if contrib.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    -EULER_GAMMA - x.ln() + sum
}

/// Modified Lentz evaluation of the continued fraction for `e^x E1(x)`, `x ≥ 1`.
fn e1_scaled_cf(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Standard Gaussian upper-tail probability `Q(z) = P(N(0,1) > z)`.
pub fn q_function(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(z * FRAC_1_SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Inverse of [`q_function`]: returns `z` with `Q(z) = p`.
pub fn q_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("Q⁻¹ requires 0 < p < 1, got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p > 0.5 {
        return Ok(-q_inv_upper(1.0 - p));
    }
    Ok(q_inv_upper(p))
}

/// Q⁻¹ for `p < 0.5`: rational starting point, then two Newton steps on
/// `ln Q(z) − ln p` so the relative error in `p` is controlled deep in the tail.
fn q_inv_upper(p: f64) -> f64 {
    let mut z = -normal_quantile_rational(p);
    let target = p.ln();
    for _ in 0..2 {
        let q = q_function(z);
        if q <= 0.0 {
            break;
        }
        // d/dz ln Q(z) = −φ(z)/Q(z)
        let slope = -std_normal_pdf(z) / q;
        z -= (q.ln() - target) / slope;
    }
    z
}

/// Rational approximation to the standard normal quantile (relative error
/// about 1e-9), valid on `(0, 1)`.
fn normal_quantile_rational(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Nodes and weights for `E[f(T)]`, `T ~ Exp(1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Quadrature {
    /// Gauss-Laguerre rule with `n` nodes (Golub-Welsch).
    pub fn gauss_laguerre(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("quadrature needs at least one node".into()));
        }
        // Jacobi matrix of the monic Laguerre recurrence.
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                (2 * i + 1) as f64
            } else if i + 1 == j || j + 1 == i {
                i.max(j) as f64
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let v0 = eig.eigenvectors[(0, k)];
                (eig.eigenvalues[k], v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self::from_pairs(pairs)
    }

    /// Trapezoidal rule after the substitution `t = e^u`, over
    /// `u ∈ [u_min, u_max]` with step `h`.
    ///
    /// The substituted integrand `f(e^u)·e^u·e^(−e^u)` is analytic in a strip
    /// whose width does not depend on where `f` varies, so integrands like
    /// `ln(1 + ρt)` keep full accuracy for very large `ρ`.
    pub fn log_trapezoid(h: f64, u_min: f64, u_max: f64) -> Result<Self> {
        if !(h > 0.0 && u_min < u_max && h.is_finite() && u_min.is_finite() && u_max.is_finite())
        {
            return Err(Error::Domain(format!(
                "bad log-trapezoid grid: h={h}, range=[{u_min}, {u_max}]"
            )));
        }
        let steps = ((u_max - u_min) / h).ceil() as usize;
        let pairs = (0..=steps)
            .map(|i| {
                let t = (u_min + i as f64 * h).exp();
                (t, h * t * (-t).exp())
            })
            .collect();
        Self::from_pairs(pairs)
    }

    fn from_pairs(pairs: Vec<(f64, f64)>) -> Result<Self> {
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if !(total > 0.0) {
            return Err(Error::Evaluation("quadrature weights sum to zero".into()));
        }
        let (nodes, weights) = pairs.into_iter().map(|(t, w)| (t, w / total)).unzip();
        Ok(Self { nodes, weights })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Default for Quadrature {
    /// Log-substituted trapezoid with step 1/8 over `u ∈ [−40, 4.5]`.
    fn default() -> Self {
        Self::log_trapezoid(0.125, -40.0, 4.5).expect("static grid is valid")
    }
}

/// `Σ wᵢ f(tᵢ)`: the quadrature estimate of `E[f(T)]`, `T ~ Exp(1)`.
pub fn expect_exp<F: Fn(f64) -> f64>(f: F, quad: &Quadrature) -> Result<f64> {
    let mut acc = 0.0;
    for (&t, &w) in quad.nodes.iter().zip(&quad.weights) {
        let v = f(t);
        if !v.is_finite() {
            return Err(Error::Evaluation(format!("integrand is {v} at node {t}")));
        }
        acc += w * v;
    }
    Ok(acc)
}

/// Seeded Monte-Carlo source of unit-rate exponential draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McOracle {
    pub seed: u64,
    pub sample_count: u64,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl McOracle {
    pub fn new(seed: u64, sample_count: u64) -> Result<Self> {
        if sample_count == 0 {
            return Err(Error::Domain("sample_count must be at least 1".into()));
        }
        Ok(Self { seed, sample_count })
    }

    /// The `index`-th uniform draw in `(0, 1)`.
    pub fn uniform(&self, index: u64) -> f64 {
        ((splitmix64(self.seed, index) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// The `index`-th unit-rate exponential draw.
    pub fn exponential(&self, index: u64) -> f64 {
        -self.uniform(index).ln()
    }

    /// All `sample_count` exponential draws, in order.
    pub fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.sample_count).map(move |i| self.exponential(i))
    }
}

/// Sample mean and standard error of `f(T)` over the oracle's draws.
pub fn mc_expect<F: Fn(f64) -> f64>(f: F, oracle: &McOracle) -> Result<(f64, f64)> {
    // Welford
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut count = 0u64;
    for t in oracle.samples() {
        let v = f(t);
        if !v.is_finite() {
            return Err(Error::Evaluation(format!("integrand is {v} at sample {t}")));
        }
        count += 1;
        let delta = v - mean;
        mean += delta / count as f64;
        m2 += delta * (v - mean);
    }
    let std_error = if count > 1 {
        (m2 / (count - 1) as f64 / count as f64).sqrt()
    } else {
        0.0
    };
    Ok((mean, std_error))
}
