//! Two-parameter linear least squares in the bases `{x, 1}`, `{x^α, 1}` and `{ln(1+x), 1}`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `ĉ(x) = a1·x + b1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit<T = f64> {
    pub a1: T,
    pub b1: T,
    pub rss: T,
}

impl<T: Scalar> LinearFit<T> {
    pub fn eval(&self, x: T) -> T {
        self.a1 * x + self.b1
    }
}

/// `v̂(x) = a2·x^α + b2` with `α` fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFit<T = f64> {
    pub a2: T,
    pub b2: T,
    pub alpha: T,
    pub rss: T,
}

impl<T: Scalar> PowerFit<T> {
    pub fn eval(&self, x: T) -> T {
        self.a2 * x.powf(self.alpha) + self.b2
    }
}

/// `v̂(x) = a2·ln(1+x) + b2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogFit<T = f64> {
    pub a2: T,
    pub b2: T,
    pub rss: T,
}

impl<T: Scalar> LogFit<T> {
    pub fn eval(&self, x: T) -> T {
        self.a2 * x.ln_1p() + self.b2
    }
}

pub fn fit_linear<T: Scalar>(xs: &[T], ys: &[T]) -> Result<LinearFit<T>> {
    let (a1, b1, rss) = fit_basis(xs, ys, |x| x)?;
    Ok(LinearFit { a1, b1, rss })
}

pub fn fit_power<T: Scalar>(xs: &[T], ys: &[T], alpha: T) -> Result<PowerFit<T>> {
    if xs.iter().any(|&x| x < T::zero()) {
        return Err(Error::Domain("power fit needs non-negative abscissae".into()));
    }
    let (a2, b2, rss) = fit_basis(xs, ys, |x| x.powf(alpha))?;
    Ok(PowerFit { a2, b2, alpha, rss })
}

pub fn fit_log<T: Scalar>(xs: &[T], ys: &[T]) -> Result<LogFit<T>> {
    if xs.iter().any(|&x| x <= -T::one()) {
        return Err(Error::Domain("log fit needs abscissae > -1".into()));
    }
    let (a2, b2, rss) = fit_basis(xs, ys, |x| x.ln_1p())?;
    Ok(LogFit { a2, b2, rss })
}

/// Minimises `Σ (y - a·φ(x) - b)²`, returning `(a, b, rss)`.
fn fit_basis<T: Scalar>(xs: &[T], ys: &[T], phi: impl Fn(T) -> T) -> Result<(T, T, T)> {
    if xs.len() != ys.len() {
        return Err(Error::Precondition(format!(
            "{} abscissae but {} ordinates",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Precondition("least squares needs at least 2 samples".into()));
    }
    let n = T::from_count(xs.len());
    let basis: Vec<T> = xs.iter().map(|&x| phi(x)).collect();
    let mean_b = basis.iter().fold(T::zero(), |s, &v| s + v) / n;
    let mean_y = ys.iter().fold(T::zero(), |s, &v| s + v) / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut scale = T::zero();
    for (&b, &y) in basis.iter().zip(ys) {
        let db = b - mean_b;
        sxx = sxx + db * db;
        sxy = sxy + db * (y - mean_y);
        scale = scale + b * b;
    }
    if !(sxx > T::epsilon() * T::from_count(64) * scale.max(T::min_positive_value())) {
        return Err(Error::SingularDesign("basis values are (numerically) all equal"));
    }
    let a = sxy / sxx;
    let b = mean_y - a * mean_b;
    let rss = basis
        .iter()
        .zip(ys)
        .map(|(&bv, &y)| {
            let r = y - a * bv - b;
            r * r
        })
        .fold(T::zero(), |s, v| s + v);
    Ok((a, b, rss))
}
