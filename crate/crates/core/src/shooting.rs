//! Shooting for the free initial slope `b = v_x(0)`.
//!
//! For a candidate `b` the HJB ODE is solved, the optimal rate is fitted by a
//! line `ĉ(x) = a1·x + b1` and the value by `v̂(x) = a2·x^α + b2` (or
//! `a2·ln(1+x) + b2` for log utility). Following the reserve from 0 under `ĉ`
//! until the first claim gives a self-consistent estimate
//!
//! ```text
//! A = E[e^{−βT}·v̂(x(T) − S)] + E[∫₀ᵀ e^{−βt}·U(ĉ(x(t))) dt],   T ~ Exp(λ), S ~ Exp(ξ)
//! ```
//!
//! of `v(0) = a`. Candidates are labelled too big (bubble), too small (the
//! fitted intercept exceeds the premium rate so `x(t) < 0`) or correct, and the
//! staged scan walks `b` down towards the too-small boundary with a decreasing
//! step schedule.

use std::cell::RefCell;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hjb::{boundary_v0, solve_value_function, Classification, HjbSolution};
use crate::model::{ModelParams, UtilitySpec};
use crate::numerics::{
    fit_linear, fit_log, fit_power, quad_exp_weight, IvpConfig, LinearFit, LogFit, PowerFit, Upper,
};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingConfig<T = f64> {
    pub b_start: T,
    /// Strictly decreasing positive decrements, one refinement stage each.
    pub step_schedule: Vec<T>,
    /// Stop once `|a − A| < epsilon`.
    pub epsilon: T,
    /// Fit abscissae are the integers `0, 1, …, fit_count − 1`.
    pub fit_count: usize,
    /// Horizon of each HJB solve.
    pub x_max: T,
    /// Monte Carlo cross-check of the final `A` with this many `(T, S)` draws.
    pub mc_check: Option<usize>,
    pub ivp: IvpConfig<T>,
}

impl<T: Scalar> Default for ShootingConfig<T> {
    fn default() -> Self {
        Self {
            b_start: lit(1.96),
            step_schedule: default_schedule(),
            epsilon: lit(0.005),
            fit_count: 11,
            x_max: lit(10.0),
            mc_check: None,
            ivp: IvpConfig::default(),
        }
    }
}

/// `[1e-2, 1e-3, …, 1e-9]`.
pub fn default_schedule<T: Scalar>() -> Vec<T> {
    (2..=9).map(|k| lit(10f64.powi(-k))).collect()
}

impl<T: Scalar> ShootingConfig<T> {
    /// Defaults with `b_start` on the first-stage grid just below the singular slope.
    pub fn for_model(p: &ModelParams<T>, u: &UtilitySpec<T>) -> Self {
        let mut cfg = Self::default();
        let d = cfg.step_schedule[0];
        let singular = u.singular_slope(p.mu);
        let mut b = (singular / d).floor() * d;
        if b >= singular {
            b = b - d;
        }
        if let Some(max) = u.max_unclamped_slope() {
            b = b.min(max);
        }
        cfg.b_start = b;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.step_schedule.is_empty()
            || self.step_schedule.iter().any(|&d| !(d > T::zero()))
            || self.step_schedule.windows(2).any(|w| !(w[1] < w[0]))
        {
            return Err(Error::InvalidParameter {
                field: "step_schedule",
                reason: "must be a non-empty, strictly decreasing sequence of positive steps".into(),
            });
        }
        if self.fit_count < 3 {
            return Err(Error::InvalidParameter {
                field: "fit_count",
                reason: format!("needs at least 3 fit points, got {}", self.fit_count),
            });
        }
        if !(self.x_max >= T::from_count(self.fit_count - 1)) {
            return Err(Error::InvalidParameter {
                field: "x_max",
                reason: format!("must cover the fit points 0..{}", self.fit_count - 1),
            });
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::InvalidParameter {
                field: "epsilon",
                reason: "must be > 0".into(),
            });
        }
        if !(self.b_start > T::zero()) {
            return Err(Error::InvalidParameter {
                field: "b_start",
                reason: "must be > 0".into(),
            });
        }
        self.ivp.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Correct,
    TooBig,
    TooSmall,
}

impl Label {
    /// Abbreviation used in the search log.
    pub fn abbrev(&self) -> &'static str {
        match self {
            Label::Correct => "c.",
            Label::TooBig => "t.b.",
            Label::TooSmall => "t.s.",
        }
    }

    pub fn from_abbrev(s: &str) -> Option<Self> {
        match s {
            "c." => Some(Label::Correct),
            "t.b." => Some(Label::TooBig),
            "t.s." => Some(Label::TooSmall),
            _ => None,
        }
    }
}

/// Least-squares approximation of the value function used after the first jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueFit<T = f64> {
    Power(PowerFit<T>),
    Log(LogFit<T>),
}

impl<T: Scalar> ValueFit<T> {
    /// `v̂(x)` for `x ≥ 0`, and 0 below zero (no dividends after ruin).
    pub fn eval_clamped(&self, x: T) -> T {
        if x < T::zero() {
            return T::zero();
        }
        match self {
            ValueFit::Power(f) => f.eval(x),
            ValueFit::Log(f) => f.eval(x),
        }
    }

    pub fn coefficients(&self) -> (T, T) {
        match self {
            ValueFit::Power(f) => (f.a2, f.b2),
            ValueFit::Log(f) => (f.a2, f.b2),
        }
    }

    pub fn zero() -> Self {
        ValueFit::Power(PowerFit {
            a2: T::zero(),
            b2: T::zero(),
            alpha: lit(0.5),
            rss: T::zero(),
        })
    }
}

/// One shooting iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEvaluation<T = f64> {
    pub b: T,
    /// `v(0)` implied by `b`.
    pub a: T,
    /// First-jump estimate; present only for correct candidates.
    pub first_jump: Option<T>,
    /// `a − A`.
    pub gap: Option<T>,
    pub label: Label,
    pub policy_fit: Option<LinearFit<T>>,
    pub value_fit: Option<ValueFit<T>>,
}

/// Reserve path `x(t) = ((μ − b1)/a1)·(1 − e^{−a1·t})` from 0 under `ĉ` before the first claim.
pub fn deterministic_trajectory<T: Scalar>(p: &ModelParams<T>, fit: &LinearFit<T>, t: T) -> Result<T> {
    check_trajectory(p, fit)?;
    Ok((p.mu - fit.b1) / fit.a1 * -(-fit.a1 * t).exp_m1())
}

fn check_trajectory<T: Scalar>(p: &ModelParams<T>, fit: &LinearFit<T>) -> Result<()> {
    if fit.b1 >= p.mu {
        return Err(Error::InfeasibleTrajectory {
            intercept: fit.b1.as_f64(),
            mu: p.mu.as_f64(),
        });
    }
    if !(fit.a1 > T::zero()) {
        return Err(Error::Precondition(format!(
            "fitted policy slope must be > 0, got {}",
            fit.a1
        )));
    }
    Ok(())
}

/// Utility of the fitted rate, with negative fitted rates paying nothing.
fn fitted_utility<T: Scalar>(u: &UtilitySpec<T>, rate: T) -> Result<T> {
    u.value(rate.max(T::zero()))
}

/// Collects the first error raised inside a quadrature integrand.
struct ErrorSlot(RefCell<Option<Error>>);

impl ErrorSlot {
    fn new() -> Self {
        Self(RefCell::new(None))
    }

    fn unwrap_or_nan<T: Scalar>(&self, r: Result<T>) -> T {
        match r {
            Ok(v) => v,
            Err(e) => {
                self.0.borrow_mut().get_or_insert(e);
                T::nan()
            }
        }
    }

    fn finish<T>(self, r: Result<T>) -> Result<T> {
        match self.0.into_inner() {
            Some(e) => Err(e),
            None => r,
        }
    }
}

/// Expected discounted value after the first claim, `E[e^{−βT}·v̂(x(T) − S)]`.
pub fn jump_term<T: Scalar>(p: &ModelParams<T>, cfit: &LinearFit<T>, vfit: &ValueFit<T>) -> Result<T> {
    check_trajectory(p, cfit)?;
    let slot = ErrorSlot::new();
    let outer = quad_exp_weight(
        |t: T| {
            let x = slot.unwrap_or_nan(deterministic_trajectory(p, cfit, t));
            let inner = slot.unwrap_or_nan(quad_exp_weight(
                |s: T| vfit.eval_clamped(x - s),
                p.xi,
                Upper::Bounded(x.max(T::zero())),
            ));
            (-p.beta * t).exp() * inner
        },
        p.lambda,
        Upper::Unbounded,
    );
    slot.finish(outer)
}

/// Expected dividends before the first claim, `E[∫₀ᵀ e^{−βt}·U(ĉ(x(t))) dt]`,
/// reduced by Fubini to `∫₀^∞ e^{−(β+λ)t}·U(ĉ(x(t))) dt`.
pub fn running_term<T: Scalar>(
    p: &ModelParams<T>,
    u: &UtilitySpec<T>,
    cfit: &LinearFit<T>,
) -> Result<T> {
    check_trajectory(p, cfit)?;
    let rate = p.beta + p.lambda;
    let slot = ErrorSlot::new();
    let integral = quad_exp_weight(
        |t: T| {
            let x = slot.unwrap_or_nan(deterministic_trajectory(p, cfit, t));
            slot.unwrap_or_nan(fitted_utility(u, cfit.eval(x)))
        },
        rate,
        Upper::Unbounded,
    );
    Ok(slot.finish(integral)? / rate)
}

/// [`running_term`] evaluated as the nested double integral over `T` and `t`.
pub fn running_term_nested<T: Scalar>(
    p: &ModelParams<T>,
    u: &UtilitySpec<T>,
    cfit: &LinearFit<T>,
) -> Result<T> {
    check_trajectory(p, cfit)?;
    let slot = ErrorSlot::new();
    let outer = quad_exp_weight(
        |horizon: T| {
            // ∫₀ᵀ e^{−βt} g(t) dt = (1/β)·∫₀ᵀ g(t) β e^{−βt} dt
            let inner = quad_exp_weight(
                |t: T| {
                    let x = slot.unwrap_or_nan(deterministic_trajectory(p, cfit, t));
                    slot.unwrap_or_nan(fitted_utility(u, cfit.eval(x)))
                },
                p.beta,
                Upper::Bounded(horizon),
            );
            slot.unwrap_or_nan(inner) / p.beta
        },
        p.lambda,
        Upper::Unbounded,
    );
    slot.finish(outer)
}

/// First-jump estimate `A` of `v(0)` by quadrature.
pub fn first_jump_value<T: Scalar>(
    p: &ModelParams<T>,
    u: &UtilitySpec<T>,
    cfit: &LinearFit<T>,
    vfit: &ValueFit<T>,
) -> Result<T> {
    Ok(jump_term(p, cfit, vfit)? + running_term(p, u, cfit)?)
}

/// Monte Carlo estimate of `A` over `n` draws of `(T, S)`; returns `(mean, standard error)`.
///
/// The running integral is tabulated once on a fixed time grid and interpolated.
pub fn first_jump_value_mc(
    p: &ModelParams<f64>,
    u: &UtilitySpec<f64>,
    cfit: &LinearFit<f64>,
    vfit: &ValueFit<f64>,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_trajectory(p, cfit)?;
    if n < 2 {
        return Err(Error::Precondition("need at least 2 draws".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let claim_time = Exp::new(p.lambda).map_err(|e| Error::Domain(e.to_string()))?;
    let claim_size = Exp::new(p.xi).map_err(|e| Error::Domain(e.to_string()))?;
    let draws: Vec<(f64, f64)> = (0..n)
        .map(|_| (claim_time.sample(&mut rng), claim_size.sample(&mut rng)))
        .collect();
    let t_max = draws.iter().map(|d| d.0).fold(0.0, f64::max);

    let dt = 1e-3;
    let steps = (t_max / dt).ceil() as usize + 1;
    let g = |t: f64| -> Result<f64> {
        let x = deterministic_trajectory(p, cfit, t)?;
        Ok((-p.beta * t).exp() * fitted_utility(u, cfit.eval(x))?)
    };
    let mut cumulative = Vec::with_capacity(steps + 1);
    cumulative.push(0.0);
    let mut g_prev = g(0.0)?;
    for i in 1..=steps {
        let (t0, t1) = ((i - 1) as f64 * dt, i as f64 * dt);
        let g_mid = g(0.5 * (t0 + t1))?;
        let g_next = g(t1)?;
        let last = *cumulative.last().unwrap();
        cumulative.push(last + dt / 6.0 * (g_prev + 4.0 * g_mid + g_next));
        g_prev = g_next;
    }

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &(t, s) in &draws {
        let pos = t / dt;
        let k = (pos.floor() as usize).min(steps - 1);
        let w = pos - k as f64;
        let running = cumulative[k] * (1.0 - w) + cumulative[k + 1] * w;
        let x = deterministic_trajectory(p, cfit, t)?;
        let sample = (-p.beta * t).exp() * vfit.eval_clamped(x - s) + running;
        sum += sample;
        sum_sq += sample * sample;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
    Ok((mean, (var / nf).sqrt()))
}

fn fit_abscissae<T: Scalar>(count: usize) -> Vec<T> {
    (0..count).map(T::from_count).collect()
}

/// Fits `ĉ` and `v̂` on the integer reserve levels `0..count`.
pub fn fit_candidate<T: Scalar>(sol: &HjbSolution<T>, count: usize) -> Result<(LinearFit<T>, ValueFit<T>)> {
    let xs = fit_abscissae::<T>(count);
    let mut cs = Vec::with_capacity(count);
    let mut vs = Vec::with_capacity(count);
    for &x in &xs {
        let k = sol.node_index(x).ok_or_else(|| {
            Error::Precondition(format!("fit point {x} is not on the solution grid"))
        })?;
        cs.push(sol.cs[k]);
        vs.push(sol.vs[k]);
    }
    let cfit = fit_linear(&xs, &cs)?;
    let vfit = match sol.utility {
        UtilitySpec::Power { alpha } => ValueFit::Power(fit_power(&xs, &vs, alpha)?),
        UtilitySpec::Log => ValueFit::Log(fit_log(&xs, &vs)?),
    };
    Ok((cfit, vfit))
}

/// Runs the full pipeline for one candidate slope.
pub fn evaluate_candidate<T: Scalar>(
    p: &ModelParams<T>,
    u: &UtilitySpec<T>,
    b: T,
    cfg: &ShootingConfig<T>,
) -> Result<CandidateEvaluation<T>> {
    let a = boundary_v0(p, u, b)?;
    let mut eval = CandidateEvaluation {
        b,
        a,
        first_jump: None,
        gap: None,
        label: Label::TooBig,
        policy_fit: None,
        value_fit: None,
    };
    let sol = match solve_value_function(p, u, b, cfg.x_max, &cfg.ivp) {
        Ok(sol) => sol,
        Err(Error::SingularLocus { .. }) => return Ok(eval),
        Err(e) => return Err(e),
    };
    if sol.classification != Classification::Decaying {
        return Ok(eval);
    }
    let (cfit, vfit) = fit_candidate(&sol, cfg.fit_count)?;
    eval.policy_fit = Some(cfit);
    eval.value_fit = Some(vfit);
    if cfit.b1 >= p.mu {
        eval.label = Label::TooSmall;
        return Ok(eval);
    }
    if !(cfit.a1 > T::zero()) {
        // a policy falling with reserves only arises on the bubble side
        return Ok(eval);
    }
    let big_a = first_jump_value(p, u, &cfit, &vfit)?;
    eval.first_jump = Some(big_a);
    eval.gap = Some(a - big_a);
    eval.label = Label::Correct;
    Ok(eval)
}

/// Outcome of [`search_initial_slope`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShootingReport<T = f64> {
    /// Every evaluated candidate, in evaluation order.
    pub log: Vec<CandidateEvaluation<T>>,
    pub warnings: Vec<String>,
    pub b_final: T,
    pub a_final: T,
    pub gap_final: T,
    /// Closest too-small slope below `b_final`, if one was hit.
    pub b_too_small: Option<T>,
    /// Largest too-big slope seen, if any.
    pub b_too_big: Option<T>,
    /// `|gap_final| < epsilon`.
    pub converged: bool,
    /// Monte Carlo `(mean, standard error)` of `A` at `b_final`, when requested.
    pub mc_check: Option<(f64, f64)>,
}

const MAX_STAGE_STEPS: usize = 100_000;

/// Staged descent in `b`: walk down by the current step while candidates stay
/// correct; on a too-small candidate return to the last correct slope and
/// continue with the next, finer step. Stops when `|a − A| < epsilon` or the
/// schedule is exhausted.
pub fn search_initial_slope<T: Scalar>(
    p: &ModelParams<T>,
    u: &UtilitySpec<T>,
    cfg: &ShootingConfig<T>,
) -> Result<ShootingReport<T>> {
    cfg.validate()?;
    let mut log = Vec::new();
    let mut warnings = Vec::new();
    let mut b_too_big: Option<T> = None;
    let mut b_too_small: Option<T> = None;

    let mut current = evaluate_candidate(p, u, cfg.b_start, cfg)?;
    let mut steps = 0;
    while current.label == Label::TooBig {
        b_too_big = Some(current.b);
        log.push(current.clone());
        let next = current.b - cfg.step_schedule[0];
        steps += 1;
        if !(next > T::zero()) || steps > MAX_STAGE_STEPS {
            return Err(Error::Precondition(
                "no admissible slope found below b_start".into(),
            ));
        }
        current = evaluate_candidate(p, u, next, cfg)?;
    }
    log.push(current.clone());
    if current.label == Label::TooSmall {
        return Err(Error::Precondition(format!(
            "b_start = {} is too small (fitted intercept exceeds the premium rate); choose a larger start",
            current.b
        )));
    }

    let mut best = current;
    let done = |e: &CandidateEvaluation<T>| e.gap.map(|g| g.abs() < cfg.epsilon).unwrap_or(false);
    let mut converged = done(&best);

    'stages: for &d in &cfg.step_schedule {
        if converged {
            break;
        }
        let base = best.b;
        for k in 1..=MAX_STAGE_STEPS {
            let b = base - T::from_count(k) * d;
            if !(b > T::zero()) {
                break;
            }
            let e = evaluate_candidate(p, u, b, cfg)?;
            log.push(e.clone());
            match e.label {
                Label::Correct => {
                    if let (Some(g_new), Some(g_old)) = (e.gap, best.gap) {
                        if g_new.abs() > g_old.abs() {
                            warnings.push(format!(
                                "gap grew from {g_old} to {g_new} when b decreased to {b}"
                            ));
                        }
                    }
                    best = e;
                    if done(&best) {
                        converged = true;
                        break 'stages;
                    }
                }
                Label::TooSmall => {
                    b_too_small = Some(b);
                    break;
                }
                Label::TooBig => {
                    warnings.push(format!("too-big candidate {b} below a correct one"));
                    b_too_big = Some(b_too_big.map_or(b, |x: T| x.max(b)));
                }
            }
        }
    }

    let mc_check = match (cfg.mc_check, &best.policy_fit, &best.value_fit) {
        (Some(n), Some(cfit), Some(vfit)) => Some(mc_cross_check(p, u, cfit, vfit, n)?),
        _ => None,
    };

    Ok(ShootingReport {
        b_final: best.b,
        a_final: best.a,
        gap_final: best.gap.expect("correct candidates carry a gap"),
        b_too_small,
        b_too_big,
        converged,
        mc_check,
        log,
        warnings,
    })
}

fn mc_cross_check<T: Scalar>(
    p: &ModelParams<T>,
    u: &UtilitySpec<T>,
    cfit: &LinearFit<T>,
    vfit: &ValueFit<T>,
    n: usize,
) -> Result<(f64, f64)> {
    let p64 = ModelParams {
        mu: p.mu.as_f64(),
        lambda: p.lambda.as_f64(),
        xi: p.xi.as_f64(),
        beta: p.beta.as_f64(),
    };
    let u64_ = match *u {
        UtilitySpec::Power { alpha } => UtilitySpec::Power { alpha: alpha.as_f64() },
        UtilitySpec::Log => UtilitySpec::Log,
    };
    let c64 = LinearFit {
        a1: cfit.a1.as_f64(),
        b1: cfit.b1.as_f64(),
        rss: cfit.rss.as_f64(),
    };
    let v64 = match *vfit {
        ValueFit::Power(f) => ValueFit::Power(PowerFit {
            a2: f.a2.as_f64(),
            b2: f.b2.as_f64(),
            alpha: f.alpha.as_f64(),
            rss: f.rss.as_f64(),
        }),
        ValueFit::Log(f) => ValueFit::Log(LogFit {
            a2: f.a2.as_f64(),
            b2: f.b2.as_f64(),
            rss: f.rss.as_f64(),
        }),
    };
    first_jump_value_mc(&p64, &u64_, &c64, &v64, n, 0x5eed)
}

/// Labels of `b = lo, lo + step, …` up to `hi`, evaluated in parallel.
pub fn label_scan<T: Scalar>(
    p: &ModelParams<T>,
    u: &UtilitySpec<T>,
    cfg: &ShootingConfig<T>,
    lo: T,
    hi: T,
    step: T,
) -> Result<Vec<(T, Label)>> {
    let n = ((hi - lo) / step + lit(1e-9)).floor().to_usize().unwrap_or(0);
    (0..=n)
        .into_par_iter()
        .map(|k| {
            let b = lo + T::from_count(k) * step;
            evaluate_candidate(p, u, b, cfg).map(|e| (b, e.label))
        })
        .collect()
}

/// Bisects for the boundary between admissible (not too big) and too-big slopes.
///
/// `lo` must not be too big and `hi` must be; returns the final `(lo, hi)` bracket.
pub fn too_big_boundary<T: Scalar>(
    p: &ModelParams<T>,
    u: &UtilitySpec<T>,
    cfg: &ShootingConfig<T>,
    mut lo: T,
    mut hi: T,
    tol: T,
) -> Result<(T, T)> {
    let is_big = |b: T| evaluate_candidate(p, u, b, cfg).map(|e| e.label == Label::TooBig);
    if is_big(lo)? || !is_big(hi)? {
        return Err(Error::Precondition(
            "bracket must start admissible and end too big".into(),
        ));
    }
    while hi - lo > tol {
        let mid = (lo + hi) * lit(0.5);
        if is_big(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}

/// Slope used when none is given: the staged search result, or, when every
/// admissible start is too small (as happens for log utility), the admissible
/// end of the too-big bracket.
pub fn default_initial_slope<T: Scalar>(
    p: &ModelParams<T>,
    u: &UtilitySpec<T>,
    cfg: &ShootingConfig<T>,
) -> Result<T> {
    match search_initial_slope(p, u, cfg) {
        Ok(report) => Ok(report.b_final),
        Err(Error::Precondition(_)) => {
            let singular = u.singular_slope(p.mu);
            let hi = match u.max_unclamped_slope() {
                Some(max) => (singular * lit(1.05)).min(max),
                None => singular * lit(1.05),
            };
            let lo = cfg.b_start.min(singular * lit(0.99));
            let (lo, _) = too_big_boundary(p, u, cfg, lo, hi, lit(1e-6))?;
            Ok(lo)
        }
        Err(e) => Err(e),
    }
}
