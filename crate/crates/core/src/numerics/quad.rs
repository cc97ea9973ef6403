//! Integrals against exponential densities, `∫ f(s) r e^{-rs} ds`.
//!
//! The integrand is mapped to `u = e^{-rs}`, which turns the weighted integral
//! over `[a, b]` into a plain integral of `f(-ln(u) / r)` over
//! `[e^{-rb}, e^{-ra}]`, and then evaluated by adaptive Simpson. Kinks in `f`
//! (for example where a post-jump reserve crosses zero) are absorbed by the
//! adaptive refinement.

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Upper integration limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Upper<T> {
    Bounded(T),
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig<T = f64> {
    /// Absolute error target for the whole integral.
    pub abs_tol: T,
    /// Relative error target, applied to a coarse first estimate of the integral.
    pub rel_tol: T,
    /// Recursion depth after which a panel is accepted as is.
    pub max_depth: usize,
    /// Exponential tail mass below which the unbounded integral is truncated.
    pub tail_mass: T,
}

impl<T: Scalar> Default for QuadConfig<T> {
    fn default() -> Self {
        Self {
            abs_tol: lit(1e-11),
            rel_tol: lit(1e-12),
            max_depth: 48,
            tail_mass: lit(1e-12),
        }
    }
}

/// `∫_0^upper f(s) · rate · e^{-rate·s} ds` with default tolerances.
pub fn quad_exp_weight<T, F>(f: F, rate: T, upper: Upper<T>) -> Result<T>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    quad_exp_weight_with(f, rate, upper, &QuadConfig::default())
}

/// As [`quad_exp_weight`] with explicit tolerances.
///
/// In the unbounded case the first block ends at `s* = -ln(tail_mass) / rate`
/// (27.6 / rate for the default mass). Further blocks of the same length are
/// added while their contribution exceeds the tail tolerance, which keeps
/// polynomially growing integrands accurate.
pub fn quad_exp_weight_with<T, F>(mut f: F, rate: T, upper: Upper<T>, cfg: &QuadConfig<T>) -> Result<T>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    if !(rate.is_finite() && rate > T::zero()) {
        return Err(Error::Domain(format!("exponential rate must be > 0, got {rate}")));
    }
    match upper {
        Upper::Bounded(b) => {
            if b.is_nan() || b < T::zero() {
                return Err(Error::Domain(format!("upper limit must be >= 0, got {b}")));
            }
            if b == T::zero() {
                return Ok(T::zero());
            }
            if b.is_infinite() {
                return unbounded(&mut f, rate, cfg);
            }
            block(&mut f, rate, T::zero(), b, cfg.abs_tol, cfg)
        }
        Upper::Unbounded => unbounded(&mut f, rate, cfg),
    }
}

fn unbounded<T: Scalar, F: FnMut(T) -> T>(f: &mut F, rate: T, cfg: &QuadConfig<T>) -> Result<T> {
    let block_len = -cfg.tail_mass.ln() / rate;
    let mut total = block(f, rate, T::zero(), block_len, cfg.abs_tol, cfg)?;
    for k in 1..64usize {
        let start = T::from_count(k) * block_len;
        let mass = (-rate * start).exp();
        if mass == T::zero() {
            break;
        }
        // integral over [start, start + len] = e^{-r·start} · ∫_0^len f(start + s) r e^{-rs} ds
        let mut shifted = |s: T| f(start + s);
        let local_tol = cfg.abs_tol / mass;
        let part = mass * block(&mut shifted, rate, T::zero(), block_len, local_tol, cfg)?;
        total = total + part;
        if part.abs() <= cfg.tail_mass * total.abs().max(T::one()) {
            break;
        }
    }
    Ok(total)
}

/// `∫_a^b f(s) r e^{-rs} ds` via the substitution `u = e^{-rs}`.
fn block<T: Scalar, F: FnMut(T) -> T>(
    f: &mut F,
    rate: T,
    a: T,
    b: T,
    abs_tol: T,
    cfg: &QuadConfig<T>,
) -> Result<T> {
    let u_lo = (-rate * b).exp();
    let u_hi = (-rate * a).exp();
    let mut g = |u: T| -> Result<T> {
        let s = if u <= T::zero() {
            b
        } else {
            (-u.ln() / rate).min(b).max(a)
        };
        let val = f(s);
        if val.is_finite() {
            Ok(val)
        } else {
            Err(Error::NonFiniteIntegrand { at: s.as_f64() })
        }
    };
    // coarse composite pass: sets the relative tolerance scale and seeds the panels
    const PANELS: usize = 16;
    let width = (u_hi - u_lo) / T::from_count(PANELS);
    let mut nodes = Vec::with_capacity(2 * PANELS + 1);
    for i in 0..=2 * PANELS {
        let u = if i == 2 * PANELS {
            u_hi
        } else {
            u_lo + width * T::from_count(i) * lit(0.5)
        };
        nodes.push((u, g(u)?));
    }
    let mut coarse = T::zero();
    for p in 0..PANELS {
        let (a, fa) = nodes[2 * p];
        let (_, fm) = nodes[2 * p + 1];
        let (b, fb) = nodes[2 * p + 2];
        coarse = coarse + simpson(a, b, fa, fm, fb);
    }
    let tol = abs_tol.max(cfg.rel_tol * coarse.abs()) / T::from_count(PANELS);
    let mut total = T::zero();
    for p in 0..PANELS {
        let (a, fa) = nodes[2 * p];
        let (_, fm) = nodes[2 * p + 1];
        let (b, fb) = nodes[2 * p + 2];
        let whole = simpson(a, b, fa, fm, fb);
        total = total + adapt(&mut g, a, b, fa, fm, fb, whole, tol, cfg.max_depth)?;
    }
    Ok(total)
}

#[inline]
fn simpson<T: Scalar>(a: T, b: T, fa: T, fm: T, fb: T) -> T {
    (b - a) / lit(6.0) * (fa + lit::<T>(4.0) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt<T: Scalar, G: FnMut(T) -> Result<T>>(
    g: &mut G,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: usize,
) -> Result<T> {
    let m = (a + b) * lit(0.5);
    let lm = (a + m) * lit(0.5);
    let rm = (m + b) * lit(0.5);
    let flm = g(lm)?;
    let frm = g(rm)?;
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    let roundoff = T::epsilon() * lit(64.0) * (left.abs() + right.abs());
    if depth == 0 || delta.abs() <= lit::<T>(15.0) * tol || delta.abs() <= roundoff {
        return Ok(left + right + delta / lit(15.0));
    }
    let half = tol * lit(0.5);
    Ok(adapt(g, a, m, fa, flm, fm, left, half, depth - 1)?
        + adapt(g, m, b, fm, frm, fb, right, half, depth - 1)?)
}
