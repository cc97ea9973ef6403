//! Large-reserve asymptotics of the value function, its slope and the optimal rate.
//!
//! Power utility `x^α/α`:
//! `v ~ ((1−α)/β)^{1−α}·x^α/α`, `v_x ~ ((1−α)/β)^{1−α}·x^{α−1}`, `c* ~ βx/(1−α)`.
//!
//! Log utility `ln(1+x)`:
//! `v ~ (ln(β(x+1)) − 1)/β`, `v_x ~ 1/(β(x+1))`, `c* ~ βx + β − 1`.
//!
//! Here `f ~ g` means `f/g → 1`, so diagnostics report ratios.

use crate::error::{Error, Result};
use crate::hjb::{Classification, HjbSolution};
use crate::model::{ModelParams, UtilitySpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticTriple<T = f64> {
    pub value: T,
    pub slope: T,
    pub rate: T,
}

pub fn asymptotic_value<T: Scalar>(p: &ModelParams<T>, u: &UtilitySpec<T>, x: T) -> T {
    match *u {
        UtilitySpec::Power { alpha } => {
            ((T::one() - alpha) / p.beta).powf(T::one() - alpha) * x.powf(alpha) / alpha
        }
        UtilitySpec::Log => ((p.beta * (x + T::one())).ln() - T::one()) / p.beta,
    }
}

pub fn asymptotic_slope<T: Scalar>(p: &ModelParams<T>, u: &UtilitySpec<T>, x: T) -> T {
    match *u {
        UtilitySpec::Power { alpha } => {
            ((T::one() - alpha) / p.beta).powf(T::one() - alpha) * x.powf(alpha - T::one())
        }
        UtilitySpec::Log => (p.beta * (x + T::one())).recip(),
    }
}

pub fn asymptotic_rate<T: Scalar>(p: &ModelParams<T>, u: &UtilitySpec<T>, x: T) -> T {
    match *u {
        UtilitySpec::Power { alpha } => p.beta * x / (T::one() - alpha),
        UtilitySpec::Log => p.beta * x + p.beta - T::one(),
    }
}

pub fn asymptotic_triple<T: Scalar>(
    p: &ModelParams<T>,
    u: &UtilitySpec<T>,
    x: T,
) -> AsymptoticTriple<T> {
    AsymptoticTriple {
        value: asymptotic_value(p, u, x),
        slope: asymptotic_slope(p, u, x),
        rate: asymptotic_rate(p, u, x),
    }
}

/// Numerical-to-asymptotic ratios at one reserve level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioSample<T = f64> {
    pub x: T,
    pub ratio_v: T,
    pub ratio_vx: T,
    pub ratio_c: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceDiagnostic<T = f64> {
    pub samples: Vec<RatioSample<T>>,
    /// `|ratio − 1|` is non-increasing across the samples, per series.
    pub monotone_v: bool,
    pub monotone_vx: bool,
    pub monotone_c: bool,
}

/// Number of tail samples in [`convergence_diagnostic`].
pub const DIAGNOSTIC_SAMPLES: usize = 20;

/// Ratios at an arbitrary reserve level on the grid span.
pub fn ratios_at<T: Scalar>(sol: &HjbSolution<T>, x: T) -> Result<RatioSample<T>> {
    let (v, vx) = sol.eval(x)?;
    let c = sol.utility.optimal_rate(vx)?.rate;
    let a = asymptotic_triple(&sol.params, &sol.utility, x);
    Ok(RatioSample {
        x,
        ratio_v: v / a.value,
        ratio_vx: vx / a.slope,
        ratio_c: c / a.rate,
    })
}

/// Ratio series at 20 grid nodes evenly spread over the last decade `[x_end/10, x_end]`.
pub fn convergence_diagnostic<T: Scalar>(sol: &HjbSolution<T>) -> Result<ConvergenceDiagnostic<T>> {
    if sol.classification != Classification::Decaying {
        return Err(Error::Precondition(format!(
            "asymptotic diagnostic needs a decaying solution, got {}",
            sol.classification.name()
        )));
    }
    let last = sol.len() - 1;
    let first = last / 10;
    let mut indices: Vec<usize> = (0..DIAGNOSTIC_SAMPLES)
        .map(|i| first + (last - first) * i / (DIAGNOSTIC_SAMPLES - 1))
        .collect();
    indices.dedup();
    let samples = indices
        .into_iter()
        .map(|k| ratios_at(sol, sol.xs[k]))
        .collect::<Result<Vec<_>>>()?;
    let monotone = |f: fn(&RatioSample<T>) -> T| {
        samples
            .windows(2)
            .all(|w| (f(&w[1]) - T::one()).abs() <= (f(&w[0]) - T::one()).abs())
    };
    Ok(ConvergenceDiagnostic {
        monotone_v: monotone(|s| s.ratio_v),
        monotone_vx: monotone(|s| s.ratio_vx),
        monotone_c: monotone(|s| s.ratio_c),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb::solve_value_function;
    use crate::numerics::IvpConfig;

    const SQRT: UtilitySpec = UtilitySpec::Power { alpha: 0.5 };

    #[test]
    fn closed_form_values() {
        let p = ModelParams::reference();
        assert!((asymptotic_value(&p, &SQRT, 10.0) - 20.0).abs() < 1e-12);
        assert!((asymptotic_value(&p, &SQRT, 100.0) - 63.245553).abs() < 1e-6);
        let log = asymptotic_value(&p, &UtilitySpec::Log, 100.0);
        assert!((log - 20.0 * ((0.05f64 * 101.0).ln() - 1.0)).abs() < 1e-12);
        assert!((log - 12.3877).abs() < 1e-4);
        assert!((asymptotic_rate(&p, &SQRT, 10.0) - 1.0).abs() < 1e-12);
        assert_eq!(asymptotic_rate(&p, &SQRT, 0.0), 0.0);
        assert!((asymptotic_rate(&p, &UtilitySpec::Log, 100.0) - 4.05).abs() < 1e-12);
    }

    #[test]
    fn triples_are_self_consistent() {
        let p = ModelParams::reference();
        for &alpha in &[0.1, 0.25, 0.5, 0.75, 0.9] {
            let u = UtilitySpec::Power { alpha };
            for i in 1..100 {
                let x = 0.37 * i as f64 + 0.01;
                let t = asymptotic_triple(&p, &u, x);
                let c = u.optimal_rate(t.slope).unwrap().rate;
                assert!((c - t.rate).abs() <= 1e-12 * t.rate);
            }
        }
        for i in 0..100 {
            let x = 20.0 + 3.1 * i as f64;
            let t = asymptotic_triple(&p, &UtilitySpec::Log, x);
            let c = UtilitySpec::Log.optimal_rate(t.slope).unwrap().rate;
            assert!((c - t.rate).abs() <= 1e-12 * t.rate.abs().max(1.0));
        }
    }

    #[test]
    fn table1_ratios() {
        let sol = solve_value_function(&ModelParams::reference(), &SQRT, 1.9, 10.0, &IvpConfig::default())
            .unwrap();
        let r = ratios_at(&sol, 10.0).unwrap();
        assert!((r.ratio_v - 0.9956).abs() < 1e-3);
        assert!((r.ratio_c - 1.0515).abs() < 1e-3);
        let d = convergence_diagnostic(&sol).unwrap();
        assert_eq!(d.samples.len(), DIAGNOSTIC_SAMPLES);
        assert!((d.samples.last().unwrap().x - 10.0).abs() < 1e-9);
    }

    #[test]
    fn self_comparison_is_unity() {
        let p = ModelParams::reference();
        let xs: Vec<f64> = (1..=200).map(|i| i as f64 * 0.5).collect();
        let vs: Vec<f64> = xs.iter().map(|&x| asymptotic_value(&p, &SQRT, x)).collect();
        let vxs: Vec<f64> = xs.iter().map(|&x| asymptotic_slope(&p, &SQRT, x)).collect();
        let cs = vxs.iter().map(|&s| SQRT.optimal_rate(s).unwrap().rate).collect();
        let sol = HjbSolution {
            xs,
            vs,
            vxs,
            cs,
            classification: Classification::Decaying,
            params: p,
            utility: SQRT,
            b: 0.0,
        };
        let d = convergence_diagnostic(&sol).unwrap();
        for s in &d.samples {
            assert!((s.ratio_v - 1.0).abs() < 1e-12);
            assert!((s.ratio_vx - 1.0).abs() < 1e-12);
            assert!((s.ratio_c - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bubble_rejected() {
        let sol = solve_value_function(&ModelParams::reference(), &SQRT, 2.0, 10.0, &IvpConfig::default())
            .unwrap();
        assert!(matches!(convergence_diagnostic(&sol), Err(Error::Precondition(_))));
    }
}
