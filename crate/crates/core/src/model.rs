//! Risk-model parameters and utility functions.
//!
//! The reserve follows a Cramér–Lundberg process with premium rate `mu`,
//! Poisson claim intensity `lambda` and `Exp(xi)` claim sizes. Dividends are
//! paid at a rate `c(x)` and valued through a utility `U` discounted at `beta`.

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Economic and probabilistic parameters of the risk model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<T = f64> {
    /// Premium income rate.
    pub mu: T,
    /// Poisson claim intensity.
    pub lambda: T,
    /// Rate of the exponential claim-size law (mean claim `1 / xi`).
    pub xi: T,
    /// Discount rate.
    pub beta: T,
}

impl<T: Scalar> ModelParams<T> {
    /// Builds a parameter set, rejecting non-positive or non-finite fields.
    pub fn new(mu: T, lambda: T, xi: T, beta: T) -> Result<Self> {
        for (field, value) in [("mu", mu), ("lambda", lambda), ("xi", xi), ("beta", beta)] {
            if !(value.is_finite() && value > T::zero()) {
                return Err(Error::InvalidParameter {
                    field,
                    reason: format!("must be finite and > 0, got {value}"),
                });
            }
        }
        Ok(Self { mu, lambda, xi, beta })
    }

    /// Like [`ModelParams::new`] but also requires the net profit condition.
    pub fn with_net_profit(mu: T, lambda: T, xi: T, beta: T) -> Result<Self> {
        let p = Self::new(mu, lambda, xi, beta)?;
        if !p.net_profit_check() {
            return Err(Error::InvalidParameter {
                field: "mu",
                reason: format!(
                    "net profit condition fails: mu = {mu} <= lambda / xi = {}",
                    lambda / xi
                ),
            });
        }
        Ok(p)
    }

    /// Parameters of the worked example used throughout the tests:
    /// `mu = 0.26, lambda = 0.1, xi = 0.4, beta = 0.05`.
    pub fn reference() -> Self {
        Self {
            mu: lit(0.26),
            lambda: lit(0.1),
            xi: lit(0.4),
            beta: lit(0.05),
        }
    }

    /// `true` iff premiums exceed the expected claim outflow, `mu > lambda / xi`.
    pub fn net_profit_check(&self) -> bool {
        self.mu > self.lambda / self.xi
    }

    /// Mean claim size `1 / xi`.
    pub fn mean_claim(&self) -> T {
        self.xi.recip()
    }
}

/// Utility applied to the dividend rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UtilitySpec<T = f64> {
    /// `U(d) = d^alpha / alpha`, `0 < alpha < 1`.
    Power { alpha: T },
    /// `U(d) = ln(1 + d)`.
    Log,
}

/// Marginal utility; power utility has unbounded marginal utility at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal<T> {
    Finite(T),
    Unbounded,
}

impl<T: Scalar> Marginal<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Marginal::Finite(v) => Some(v),
            Marginal::Unbounded => None,
        }
    }
}

/// Maximiser of the Hamiltonian for a given value-function slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalRate<T> {
    pub rate: T,
    /// Set when the unconstrained maximiser was negative and the rate was clamped to 0.
    pub clamped: bool,
}

impl<T: Scalar> UtilitySpec<T> {
    pub fn power(alpha: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(Error::InvalidParameter {
                field: "alpha",
                reason: format!("power exponent must lie in (0, 1), got {alpha}"),
            });
        }
        Ok(UtilitySpec::Power { alpha })
    }

    /// `U(d)`; both variants vanish at `d = 0`.
    pub fn value(&self, d: T) -> Result<T> {
        check_rate(d)?;
        Ok(match *self {
            UtilitySpec::Power { alpha } => {
                if d == T::zero() {
                    T::zero()
                } else {
                    d.powf(alpha) / alpha
                }
            }
            UtilitySpec::Log => d.ln_1p(),
        })
    }

    /// `U'(d)`.
    pub fn derivative(&self, d: T) -> Result<Marginal<T>> {
        check_rate(d)?;
        Ok(match *self {
            UtilitySpec::Power { alpha } => {
                if d == T::zero() {
                    Marginal::Unbounded
                } else {
                    Marginal::Finite(d.powf(alpha - T::one()))
                }
            }
            UtilitySpec::Log => Marginal::Finite((T::one() + d).recip()),
        })
    }

    /// Inverse marginal utility `(U')^{-1}(vx)`, the optimal dividend rate for slope `vx`.
    ///
    /// For log utility a slope above 1 would give a negative rate; the rate is
    /// clamped to 0 and flagged.
    pub fn optimal_rate(&self, vx: T) -> Result<OptimalRate<T>> {
        if !(vx.is_finite() && vx > T::zero()) {
            return Err(Error::Domain(format!(
                "value-function slope must be finite and > 0, got {vx}"
            )));
        }
        Ok(match *self {
            UtilitySpec::Power { alpha } => OptimalRate {
                rate: vx.powf(-(T::one() - alpha).recip()),
                clamped: false,
            },
            UtilitySpec::Log => {
                let raw = vx.recip() - T::one();
                if raw < T::zero() {
                    OptimalRate {
                        rate: T::zero(),
                        clamped: true,
                    }
                } else {
                    OptimalRate {
                        rate: raw,
                        clamped: false,
                    }
                }
            }
        })
    }

    /// Largest slope whose optimal rate is still admissible without clamping.
    pub fn max_unclamped_slope(&self) -> Option<T> {
        match self {
            UtilitySpec::Power { .. } => None,
            UtilitySpec::Log => Some(T::one()),
        }
    }

    /// Slope at which the optimal rate equals the premium rate `mu`.
    pub fn singular_slope(&self, mu: T) -> T {
        match *self {
            UtilitySpec::Power { alpha } => mu.powf(alpha - T::one()),
            UtilitySpec::Log => (T::one() + mu).recip(),
        }
    }
}

fn check_rate<T: Scalar>(d: T) -> Result<()> {
    if d.is_nan() || d < T::zero() {
        return Err(Error::Domain(format!("dividend rate must be >= 0, got {d}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SQRT: UtilitySpec<f64> = UtilitySpec::Power { alpha: 0.5 };

    #[test]
    fn utility_values() {
        assert_eq!(SQRT.value(0.0).unwrap(), 0.0);
        assert!((SQRT.value(1.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(UtilitySpec::<f64>::Log.value(0.0).unwrap(), 0.0);
        assert!(SQRT.value(-1.0).is_err());
        assert!(UtilitySpec::<f64>::Log.value(-0.5).is_err());
    }

    #[test]
    fn marginal_utility() {
        assert_eq!(SQRT.derivative(4.0).unwrap(), Marginal::Finite(0.5));
        assert_eq!(SQRT.derivative(0.0).unwrap(), Marginal::Unbounded);
        assert_eq!(UtilitySpec::<f64>::Log.derivative(0.0).unwrap(), Marginal::Finite(1.0));
        let m = UtilitySpec::<f64>::Log.derivative(9.0).unwrap().finite().unwrap();
        assert!((m - 0.1).abs() < 1e-15);
    }

    #[test]
    fn optimal_rate_examples() {
        let c = SQRT.optimal_rate(1.9).unwrap();
        assert!((c.rate - 0.2770).abs() < 5e-5);
        assert!((SQRT.optimal_rate(2.0).unwrap().rate - 0.25).abs() < 1e-15);
        let log = UtilitySpec::<f64>::Log.optimal_rate(1.0).unwrap();
        assert_eq!(log.rate, 0.0);
        assert!(!log.clamped);
        let clamped = UtilitySpec::<f64>::Log.optimal_rate(1.5).unwrap();
        assert_eq!(clamped.rate, 0.0);
        assert!(clamped.clamped);
        assert!(SQRT.optimal_rate(0.0).is_err());
    }

    #[test]
    fn net_profit() {
        assert!(ModelParams::new(0.26, 0.1, 0.4, 0.05).unwrap().net_profit_check());
        assert!(!ModelParams::new(0.25, 0.1, 0.4, 0.05).unwrap().net_profit_check());
        assert!(ModelParams::new(1.0, 0.1, 10.0, 0.05).unwrap().net_profit_check());
        assert!(ModelParams::with_net_profit(0.25, 0.1, 0.4, 0.05).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        match ModelParams::new(-0.26, 0.1, 0.4, 0.05) {
            Err(Error::InvalidParameter { field, .. }) => assert_eq!(field, "mu"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(ModelParams::new(0.26, 0.1, 0.0, 0.05).is_err());
        assert!(UtilitySpec::power(1.0).is_err());
        assert!(UtilitySpec::power(0.0).is_err());
    }

    #[test]
    fn singular_slope_reference() {
        let b = SQRT.singular_slope(0.26);
        assert!((b - 1.96116).abs() < 1e-5);
        assert!((SQRT.optimal_rate(b).unwrap().rate - 0.26).abs() < 1e-14);
    }

    #[test]
    fn works_in_single_precision() {
        let u = UtilitySpec::<f32>::power(0.5).unwrap();
        assert!((u.optimal_rate(2.0).unwrap().rate - 0.25).abs() < 1e-6);
    }

    fn utilities() -> impl Strategy<Value = UtilitySpec<f64>> {
        prop_oneof![
            (0.05f64..0.95).prop_map(|alpha| UtilitySpec::Power { alpha }),
            Just(UtilitySpec::Log),
        ]
    }

    proptest! {
        #[test]
        fn derivative_matches_central_difference(u in utilities(), d in 0.1f64..50.0) {
            let h = 1e-4 * d;
            let fd = (u.value(d + h).unwrap() - u.value(d - h).unwrap()) / (2.0 * h);
            let exact = u.derivative(d).unwrap().finite().unwrap();
            prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0));
        }

        #[test]
        fn optimal_rate_inverts_marginal(u in utilities(), t in 0.01f64..0.99) {
            // keep log slopes inside (0, 1] so the rate stays unclamped
            let vx = match u { UtilitySpec::Log => t, UtilitySpec::Power { .. } => 10.0 * t };
            let c = u.optimal_rate(vx).unwrap();
            prop_assert!(!c.clamped);
            let back = u.derivative(c.rate).unwrap().finite().unwrap();
            prop_assert!((back - vx).abs() <= 1e-12 * vx);
        }

        #[test]
        fn optimal_rate_decreasing(u in utilities(), t in 0.01f64..0.98, dt in 1e-3f64..0.01) {
            let scale = match u { UtilitySpec::Log => 1.0, UtilitySpec::Power { .. } => 10.0 };
            let lo = u.optimal_rate(scale * t).unwrap().rate;
            let hi = u.optimal_rate(scale * (t + dt)).unwrap().rate;
            prop_assert!(hi < lo);
        }
    }
}
