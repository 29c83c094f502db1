//! Radar range feasibility for the joint protocol.
//!
//! An echo from an object is separable from the user's uplink reply as long
//! as it arrives within the zero-correlation zone, i.e. no more than `k`
//! symbols after the reply would. With all protocol times in symbol periods
//! this bounds the object distance by `d_user + ν·T_s·(t_pr + k)/2`.

use crate::error::{Error, Result};

/// Free-space propagation speed (m/s).
pub const SPEED_OF_LIGHT: f64 = 3e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarScenario {
    /// Base station to user distance (m).
    pub d_user: f64,
    /// User processing time, in symbol periods.
    pub t_proc_symbols: f64,
    /// Symbol period (s).
    pub symbol_period: f64,
    /// Correlation-zone lags.
    pub k: u32,
    /// Propagation speed (m/s).
    pub wave_speed: f64,
}

impl RadarScenario {
    pub fn new(d_user: f64, t_proc_symbols: f64, symbol_period: f64, k: u32) -> Result<Self> {
        let s = Self { d_user, t_proc_symbols, symbol_period, k, wave_speed: SPEED_OF_LIGHT };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.d_user) || !finite_nonneg(self.t_proc_symbols) {
            return Err(Error::InvalidScenario(
                "distance and processing time must be finite and nonnegative".into(),
            ));
        }
        if !(self.symbol_period > 0.0 && self.symbol_period.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "symbol period {} must be positive",
                self.symbol_period
            )));
        }
        if !(self.wave_speed > 0.0 && self.wave_speed.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "wave speed {} must be positive",
                self.wave_speed
            )));
        }
        Ok(())
    }
}

/// Largest object distance (m) whose echo lands inside the correlation zone.
pub fn max_sensing_range(s: &RadarScenario) -> f64 {
    s.d_user + s.wave_speed * s.symbol_period * (s.t_proc_symbols + f64::from(s.k)) / 2.0
}

/// Whether an object at `d_object` meters is within [`max_sensing_range`].
pub fn is_detectable(d_object: f64, s: &RadarScenario) -> bool {
    d_object <= max_sensing_range(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn worked_example() -> RadarScenario {
        RadarScenario::new(25e3, 1.0, 25e-6, 4).unwrap()
    }

    #[test]
    fn worked_example_range() {
        let s = worked_example();
        assert_relative_eq!(max_sensing_range(&s), 43_750.0, max_relative = 1e-12);
        assert!(is_detectable(43_750.0, &s));
        assert!(!is_detectable(43_760.0, &s));
    }

    #[test]
    fn degenerate_zone_gives_user_distance() {
        let s = RadarScenario::new(12_345.0, 0.0, 1e-6, 0).unwrap();
        assert_eq!(max_sensing_range(&s), 12_345.0);
    }

    #[test]
    fn margin_is_linear_in_symbol_period() {
        let s = worked_example();
        let doubled = RadarScenario { symbol_period: 2.0 * s.symbol_period, ..s };
        assert_relative_eq!(
            max_sensing_range(&doubled) - s.d_user,
            2.0 * (max_sensing_range(&s) - s.d_user),
            max_relative = 1e-14
        );
    }

    #[test]
    fn rejects_bad_scenarios() {
        assert!(RadarScenario::new(-1.0, 1.0, 1e-6, 1).is_err());
        assert!(RadarScenario::new(1.0, 1.0, 0.0, 1).is_err());
        assert!(RadarScenario::new(1.0, f64::NAN, 1e-6, 1).is_err());
    }

    proptest! {
        #[test]
        fn range_never_below_user_distance(
            d in 0.0..1e6f64, t in 0.0..10.0f64, ts in 1e-9..1e-3f64, k in 0u32..64,
        ) {
            let s = RadarScenario::new(d, t, ts, k).unwrap();
            let r = max_sensing_range(&s);
            prop_assert!(r >= d);
            prop_assert_eq!(r == d, t + f64::from(k) == 0.0);
            prop_assert!(is_detectable(d, &s));
        }

        #[test]
        fn detectability_is_downward_closed(
            d in 0.0..1e5f64, k in 0u32..16, frac in 0.0..1.0f64, extra in 0.0..2e5f64,
        ) {
            let s = RadarScenario::new(d, 1.0, 25e-6, k).unwrap();
            let far = d + extra;
            if is_detectable(far, &s) {
                prop_assert!(is_detectable(far * frac, &s));
            }
        }
    }
}
