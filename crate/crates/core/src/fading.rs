//! Channel-estimation error for pilot-assisted transmission over Rayleigh
//! fading, and the effective SNR seen by the data phase.
//!
//! A packet of `n` symbols spends `αn` of them on pilots. With an MMSE
//! estimator the mismatch variance is `1/(1 + αnρ)` under block fading;
//! continuous fading adds a Doppler term that grows with the distance between
//! the pilot block and the data it must cover.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FadingKind {
    /// Constant over a packet, independent across packets.
    Block,
    /// Time-varying within a packet, parameterized by a normalized Doppler.
    Continuous,
}

impl std::str::FromStr for FadingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "block" => Ok(Self::Block),
            "continuous" => Ok(Self::Continuous),
            other => Err(Error::Parse(format!("unknown fading kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for FadingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Block => "block",
            Self::Continuous => "continuous",
        })
    }
}

/// One short-packet transmission setting.
///
/// `rho` is a linear SNR and `f_d` a Doppler frequency normalized to the
/// symbol rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotScenario {
    pub n: u32,
    pub alpha: f64,
    pub epsilon: f64,
    pub rho: f64,
    pub f_d: f64,
    pub fading: FadingKind,
}

impl PilotScenario {
    /// Validated constructor.
    pub fn new(
        n: u32,
        alpha: f64,
        epsilon: f64,
        rho: f64,
        f_d: f64,
        fading: FadingKind,
    ) -> Result<Self> {
        let s = Self {
            n,
            alpha,
            epsilon,
            rho,
            f_d,
            fading,
        };
        s.validate()?;
        Ok(s)
    }

    /// Block-fading scenario with `f_d = 0`.
    pub fn block(n: u32, alpha: f64, epsilon: f64, rho: f64) -> Result<Self> {
        Self::new(n, alpha, epsilon, rho, 0.0, FadingKind::Block)
    }

    pub fn continuous(n: u32, alpha: f64, epsilon: f64, rho: f64, f_d: f64) -> Result<Self> {
        Self::new(n, alpha, epsilon, rho, f_d, FadingKind::Continuous)
    }

    /// Same scenario with a different pilot fraction, validated.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let s = Self { alpha, ..*self };
        s.validate()?;
        Ok(s)
    }

    /// Smallest admissible pilot fraction, one pilot symbol.
    pub fn min_alpha(&self) -> f64 {
        1.0 / f64::from(self.n)
    }

    /// Number of pilot symbols `αn` (not necessarily an integer).
    pub fn pilot_symbols(&self) -> f64 {
        self.alpha * f64::from(self.n)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if self.n < 2 {
            return bad(format!("packet length n must be at least 2, got {}", self.n));
        }
        if !self.alpha.is_finite() || self.pilot_symbols() < 1.0 - 1e-12 || self.alpha >= 1.0 {
            return bad(format!(
                "pilot fraction must satisfy 1/n <= alpha < 1, got alpha = {} with n = {}",
                self.alpha, self.n
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("SNR must be positive and finite, got {}", self.rho));
        }
        if !(self.f_d >= 0.0 && self.f_d.is_finite()) {
            return bad(format!("Doppler must be nonnegative, got {}", self.f_d));
        }
        if self.fading == FadingKind::Block && self.f_d != 0.0 {
            return bad(format!("block fading requires f_d = 0, got {}", self.f_d));
        }
        Ok(())
    }
}

/// Variance of the channel-estimate mismatch, after clamping at 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationError {
    pub sigma2: f64,
    pub doppler_part: f64,
    pub clamped: bool,
}

fn noise_error_var(s: &PilotScenario) -> f64 {
    1.0 / (1.0 + s.pilot_symbols() * s.rho)
}

/// Block-fading MMSE mismatch variance `1/(1 + αnρ)`.
pub fn block_error_var(s: &PilotScenario) -> Result<EstimationError> {
    s.validate()?;
    if s.fading != FadingKind::Block {
        return Err(Error::InvalidScenario(
            "block_error_var needs a block-fading scenario".into(),
        ));
    }
    Ok(EstimationError {
        sigma2: noise_error_var(s),
        doppler_part: 0.0,
        clamped: false,
    })
}

/// Extra mismatch caused by channel drift across the packet:
/// `2·(π αn ρ f_D / (1 + αnρ))²·(n − αn/2)²`.
pub fn doppler_var(s: &PilotScenario) -> Result<f64> {
    s.validate()?;
    if s.fading != FadingKind::Continuous {
        return Err(Error::InvalidScenario(
            "doppler_var needs a continuous-fading scenario".into(),
        ));
    }
    Ok(doppler_term(s))
}

fn doppler_term(s: &PilotScenario) -> f64 {
    let nt = s.pilot_symbols();
    let n = f64::from(s.n);
    let drift = PI * nt * s.rho * s.f_d / (1.0 + nt * s.rho);
    let span = n - nt / 2.0;
    2.0 * drift * drift * span * span
}

/// Total mismatch variance for either fading kind, clamped at 1.
pub fn total_error_var(s: &PilotScenario) -> Result<EstimationError> {
    s.validate()?;
    match s.fading {
        FadingKind::Block => block_error_var(s),
        FadingKind::Continuous => {
            let doppler_part = doppler_term(s);
            let raw = noise_error_var(s) + doppler_part;
            Ok(EstimationError {
                sigma2: raw.min(1.0),
                doppler_part,
                clamped: raw > 1.0,
            })
        }
    }
}

/// Effective SNR `ρ(1 − σ²)/(1 + ρσ²)` after lumping estimation error into noise.
pub fn effective_snr(rho: f64, err: &EstimationError) -> Result<f64> {
    let s2 = err.sigma2;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Domain(format!("SNR must be positive, got {rho}")));
    }
    if !(0.0..=1.0).contains(&s2) {
        return Err(Error::Domain(format!("sigma2 must lie in [0, 1], got {s2}")));
    }
    Ok(rho * (1.0 - s2) / (1.0 + rho * s2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn err(sigma2: f64) -> EstimationError {
        EstimationError {
            sigma2,
            doppler_part: 0.0,
            clamped: false,
        }
    }

    #[test]
    fn block_closed_form() {
        let s = PilotScenario::block(100, 0.1, 1e-3, 10.0).unwrap();
        let e = block_error_var(&s).unwrap();
        assert_relative_eq!(e.sigma2, 1.0 / 101.0, max_relative = 1e-15);
        assert_eq!(e.doppler_part, 0.0);
        assert!(!e.clamped);
        // tiny training energy leaves the prior variance
        let s = PilotScenario::block(2, 0.5, 1e-3, 1e-12).unwrap();
        assert!((block_error_var(&s).unwrap().sigma2 - 1.0).abs() < 1e-11);
    }

    #[test]
    fn block_rejects_continuous() {
        let s = PilotScenario::continuous(10, 0.2, 1e-3, 10.0, 0.0).unwrap();
        assert!(block_error_var(&s).is_err());
        let b = PilotScenario::block(10, 0.2, 1e-3, 10.0).unwrap();
        assert!(doppler_var(&b).is_err());
    }

    #[test]
    fn scenario_invariants() {
        assert!(PilotScenario::block(30, 1.0 / 30.0, 1e-9, 10.0).is_ok());
        assert!(PilotScenario::block(30, 0.02, 1e-9, 10.0).is_err());
        assert!(PilotScenario::block(30, 1.0, 1e-9, 10.0).is_err());
        assert!(PilotScenario::block(30, 0.5, 0.0, 10.0).is_err());
        assert!(PilotScenario::block(30, 0.5, 1.0, 10.0).is_err());
        assert!(PilotScenario::block(30, 0.5, 0.1, 0.0).is_err());
        assert!(PilotScenario::new(30, 0.5, 0.1, 1.0, 0.01, FadingKind::Block).is_err());
        assert!(PilotScenario::continuous(30, 0.5, 0.1, 1.0, -0.01).is_err());
        assert!(PilotScenario::block(1, 0.5, 0.1, 1.0).is_err());
    }

    #[test]
    fn doppler_examples() {
        let s = PilotScenario::continuous(10, 0.2, 1e-3, 10.0, 0.0).unwrap();
        assert_eq!(doppler_var(&s).unwrap(), 0.0);

        // Hand substitution: αn = 2, αnρ = 20, drift = π·20·0.02/21, span = 9.
        let s = PilotScenario::continuous(10, 0.2, 1e-3, 10.0, 0.02).unwrap();
        let drift = PI * 0.4 / 21.0;
        let expected = 2.0 * drift * drift * 81.0;
        assert_relative_eq!(doppler_var(&s).unwrap(), expected, max_relative = 1e-14);
        assert_relative_eq!(doppler_var(&s).unwrap(), 0.580_091_034_186_476_6, max_relative = 1e-12);

        // α → 1 specialization, evaluated at α just below 1
        let n = 8.0;
        let (rho, fd) = (3.0, 0.01);
        let s = PilotScenario::continuous(8, 1.0 - 1e-15, 1e-3, rho, fd).unwrap();
        let limit = 2.0 * (PI * n * rho * fd / (1.0 + n * rho)).powi(2) * (n / 2.0).powi(2);
        assert_relative_eq!(doppler_var(&s).unwrap(), limit, max_relative = 1e-12);
    }

    #[test]
    fn total_reduces_and_clamps() {
        let c = PilotScenario::continuous(30, 0.1, 1e-3, 10.0, 0.0).unwrap();
        let b = PilotScenario::block(30, 0.1, 1e-3, 10.0).unwrap();
        assert_eq!(
            total_error_var(&c).unwrap().sigma2,
            block_error_var(&b).unwrap().sigma2
        );

        let s = PilotScenario::continuous(1000, 0.01, 1e-3, 100.0, 0.1).unwrap();
        let e = total_error_var(&s).unwrap();
        assert_eq!(e.sigma2, 1.0);
        assert!(e.clamped);

        let s = PilotScenario::continuous(30, 0.1, 1e-3, 10.0, 0.001).unwrap();
        let e = total_error_var(&s).unwrap();
        assert!(!e.clamped);
        assert_relative_eq!(
            e.sigma2,
            noise_error_var(&s) + doppler_var(&s).unwrap(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn effective_snr_examples() {
        assert_eq!(effective_snr(7.0, &err(0.0)).unwrap(), 7.0);
        assert_eq!(effective_snr(7.0, &err(1.0)).unwrap(), 0.0);
        assert_relative_eq!(effective_snr(1.0, &err(0.5)).unwrap(), 1.0 / 3.0, max_relative = 1e-15);
        assert!(effective_snr(0.0, &err(0.5)).is_err());
        assert!(effective_snr(1.0, &err(1.5)).is_err());
        assert!(effective_snr(1.0, &err(-0.1)).is_err());
    }

    proptest! {
        #[test]
        fn effective_snr_bounded(rho in 1e-3f64..1e5, s2 in 0.0f64..=1.0) {
            let r = effective_snr(rho, &err(s2)).unwrap();
            prop_assert!(r >= 0.0 && r <= rho);
            if s2 > 0.0 {
                prop_assert!(r < rho);
            }
        }

        #[test]
        fn block_identity(n in 2u32..500, frac in 0.0f64..1.0, rho in 1e-3f64..1e4) {
            let alpha = (1.0 + frac * (f64::from(n) - 1.5)) / f64::from(n);
            let s = PilotScenario::block(n, alpha, 1e-3, rho).unwrap();
            let e = block_error_var(&s).unwrap();
            prop_assert!((e.sigma2 * (1.0 + alpha * f64::from(n) * rho) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn block_monotone(n in 2u32..200, rho in 1e-2f64..1e3) {
            let a = PilotScenario::block(n, 1.0 / f64::from(n), 1e-3, rho).unwrap();
            let b = a.with_alpha(0.5f64.max(a.alpha * 1.5).min(0.99)).unwrap();
            let c = PilotScenario { rho: rho * 2.0, ..a };
            let d = PilotScenario { n: n + 1, alpha: 1.0 / f64::from(n), ..a };
            let ea = block_error_var(&a).unwrap().sigma2;
            prop_assert!(block_error_var(&b).unwrap().sigma2 < ea);
            prop_assert!(block_error_var(&c).unwrap().sigma2 < ea);
            prop_assert!(block_error_var(&d).unwrap().sigma2 < ea);
        }

        #[test]
        fn total_nondecreasing_in_doppler(
            n in 2u32..100, rho in 1e-1f64..1e3, f1 in 0.0f64..0.05, df in 0.0f64..0.05
        ) {
            let a = PilotScenario::continuous(n, 1.0 / f64::from(n), 1e-3, rho, f1).unwrap();
            let b = PilotScenario { f_d: f1 + df, ..a };
            prop_assert!(total_error_var(&b).unwrap().sigma2 >= total_error_var(&a).unwrap().sigma2);
        }
    }
}
