//! The HJB equation for exponential claims, reduced to a second-order ODE.
//!
//! With `c* = (U')^{-1}(v_x)` the integro-differential HJB equation becomes
//!
//! ```text
//! (μ − c*)·v_xx + (ξμ − β − λ)·v_x − ξβ·v + ξ·(U(c*) − c*·v_x) = 0
//! ```
//!
//! which covers both the power and the logarithmic utility. At `x = 0` the
//! convolution term vanishes and the HJB equation fixes `v(0)` in terms of the
//! free slope `b = v_x(0)`. The ODE loses its highest-order term on the
//! singular locus `c* = μ`.

use crate::error::{Error, Result};
use crate::model::{ModelParams, UtilitySpec};
use crate::numerics::{integrate_ivp, IvpConfig, Singularity, Termination};
use crate::scalar::{lit, Scalar};

/// Qualitative shape of a solution branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Classification<T = f64> {
    /// Slope decreasing on the tail; the candidate for the value function.
    Decaying,
    /// `v` and `v_x` blow up, so discounted dividends vanish.
    Bubble,
    /// Integration could not continue past `x` (dividend rate hit the premium rate).
    SingularStop { x: T },
}

impl<T> Classification<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Classification::Decaying => "Decaying",
            Classification::Bubble => "Bubble",
            Classification::SingularStop { .. } => "SingularStop",
        }
    }
}

/// Value function `v`, slope `v_x` and optimal rate `c*` on a uniform reserve grid.
#[derive(Debug, Clone)]
pub struct HjbSolution<T = f64> {
    pub xs: Vec<T>,
    pub vs: Vec<T>,
    pub vxs: Vec<T>,
    pub cs: Vec<T>,
    pub classification: Classification<T>,
    pub params: ModelParams<T>,
    pub utility: UtilitySpec<T>,
    /// Initial slope `v_x(0)` the branch was shot from.
    pub b: T,
}

/// Slope at which a solve aborts as a bubble, relative to the initial slope.
pub const BUBBLE_GUARD_FACTOR: f64 = 100.0;

const SINGULAR_GAP: f64 = 1e-12;

/// `v_xx` from the unified ODE at state `(v, vx)`.
///
/// Errors with [`Error::SingularLocus`] when `|μ − c*| < 1e-12`.
pub fn curvature_rhs<T: Scalar>(p: &ModelParams<T>, u: &UtilitySpec<T>, v: T, vx: T) -> Result<T> {
    let c = u.optimal_rate(vx)?.rate;
    let denom = p.mu - c;
    if denom.abs() < lit(SINGULAR_GAP) {
        return Err(Error::SingularLocus {
            gap: denom.abs().as_f64(),
        });
    }
    let drift = p.xi * p.mu - p.beta - p.lambda;
    let hamiltonian = u.value(c)? - c * vx;
    Ok(-(drift * vx - p.xi * p.beta * v + p.xi * hamiltonian) / denom)
}

/// `v(0) = [μ·b + U(c₀) − c₀·b] / (β + λ)` with `c₀ = (U')^{-1}(b)`.
pub fn boundary_v0<T: Scalar>(p: &ModelParams<T>, u: &UtilitySpec<T>, b: T) -> Result<T> {
    let c0 = u.optimal_rate(b)?;
    if c0.clamped {
        return Err(Error::Domain(format!(
            "initial slope {b} implies a negative dividend rate"
        )));
    }
    let c0 = c0.rate;
    Ok((p.mu * b + u.value(c0)? - c0 * b) / (p.beta + p.lambda))
}

/// Integrates `(v, v_x)' = (v_x, v_xx)` from `(v(0), b)` over `[0, x_max]`.
pub fn solve_value_function<T: Scalar>(
    p: &ModelParams<T>,
    u: &UtilitySpec<T>,
    b: T,
    x_max: T,
    cfg: &IvpConfig<T>,
) -> Result<HjbSolution<T>> {
    if !(x_max > T::zero()) {
        return Err(Error::Precondition(format!("x_max must be > 0, got {x_max}")));
    }
    let v0 = boundary_v0(p, u, b)?;
    let c0 = u.optimal_rate(b)?.rate;
    if (p.mu - c0).abs() < lit(SINGULAR_GAP) {
        return Err(Error::SingularLocus {
            gap: (p.mu - c0).abs().as_f64(),
        });
    }
    let guard_level = b * lit(BUBBLE_GUARD_FACTOR);
    let dense = integrate_ivp(
        |_, s: &[T; 2]| {
            curvature_rhs(p, u, s[0], s[1])
                .map(|vxx| [s[1], vxx])
                .map_err(|_| Singularity)
        },
        T::zero(),
        [v0, b],
        x_max,
        cfg,
        |_, s| s[1] > guard_level,
    )?;

    let n = dense.xs.len();
    let mut vs = Vec::with_capacity(n);
    let mut vxs = Vec::with_capacity(n);
    let mut cs = Vec::with_capacity(n);
    for s in &dense.states {
        vs.push(s[0]);
        vxs.push(s[1]);
        cs.push(u.optimal_rate(s[1])?.rate);
    }
    let classification = match dense.termination {
        Termination::Guard { .. } => Classification::Bubble,
        Termination::Singular { x } | Termination::Diverged { x } => {
            Classification::SingularStop { x }
        }
        Termination::Completed => classify_solution(&vxs)?,
    };
    Ok(HjbSolution {
        xs: dense.xs,
        vs,
        vxs,
        cs,
        classification,
        params: *p,
        utility: *u,
        b,
    })
}

/// Classifies a completed grid from its slope column.
///
/// Bubble when the slope rises over the final quarter or ends above its start;
/// Decaying when it falls over the final quarter and ends below its start.
pub fn classify_solution<T: Scalar>(vxs: &[T]) -> Result<Classification<T>> {
    let n = vxs.len();
    if n < 10 {
        return Err(Error::Precondition(format!(
            "classification needs at least 10 grid points, got {n}"
        )));
    }
    let tail = &vxs[n - n / 4 - 1..];
    let rising = tail.windows(2).all(|w| w[1] > w[0]);
    let falling = tail.windows(2).all(|w| w[1] < w[0]);
    let (first, last) = (vxs[0], vxs[n - 1]);
    if rising || last > first {
        Ok(Classification::Bubble)
    } else if falling && last < first {
        Ok(Classification::Decaying)
    } else {
        Err(Error::Indeterminate(
            "slope neither strictly rising nor strictly falling on the grid tail".into(),
        ))
    }
}

/// Riccati-form residual at one grid index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiResidual<T> {
    pub value: T,
    /// A one-sided difference was used (first or last index).
    pub one_sided: bool,
}

impl<T: Scalar> HjbSolution<T> {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn spacing(&self) -> T {
        if self.xs.len() < 2 {
            T::zero()
        } else {
            self.xs[1] - self.xs[0]
        }
    }

    pub fn x_end(&self) -> T {
        *self.xs.last().expect("solution grid is never empty")
    }

    /// Index of the grid node at `x`, if `x` is (to round-off) a node.
    pub fn node_index(&self, x: T) -> Option<usize> {
        let h = self.spacing();
        if h <= T::zero() {
            return (x == self.xs[0]).then_some(0);
        }
        let k = ((x - self.xs[0]) / h).round().to_usize()?;
        (k < self.xs.len() && (self.xs[k] - x).abs() <= h * lit(1e-6)).then_some(k)
    }

    /// `(v, v_x)` at any `x` on the grid span by cubic Hermite interpolation.
    pub fn eval(&self, x: T) -> Result<(T, T)> {
        let (lo, hi) = (self.xs[0], self.x_end());
        if !(x >= lo && x <= hi) {
            return Err(Error::Domain(format!("x = {x} outside grid [{lo}, {hi}]")));
        }
        if let Some(k) = self.node_index(x) {
            return Ok((self.vs[k], self.vxs[k]));
        }
        let h = self.spacing();
        let k = ((x - lo) / h).floor().to_usize().unwrap_or(0).min(self.len() - 2);
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let v = hermite(x0, x1, self.vs[k], self.vxs[k], self.vs[k + 1], self.vxs[k + 1], x);
        let vx = match (
            curvature_rhs(&self.params, &self.utility, self.vs[k], self.vxs[k]),
            curvature_rhs(&self.params, &self.utility, self.vs[k + 1], self.vxs[k + 1]),
        ) {
            (Ok(a), Ok(b)) => hermite(x0, x1, self.vxs[k], a, self.vxs[k + 1], b, x),
            _ => {
                let t = (x - x0) / h;
                self.vxs[k] + t * (self.vxs[k + 1] - self.vxs[k])
            }
        };
        Ok((v, vx))
    }

    /// Residual of the full integro-differential HJB equation at `x`,
    ///
    /// `(μ − c*)·v_x − (β+λ)·v + U(c*) + λ·∫₀ˣ v(x−y)·ξe^{−ξy} dy`,
    ///
    /// with the convolution evaluated by the trapezoid rule on the grid.
    pub fn hjb_residual(&self, x: T) -> Result<T> {
        let (v, vx) = self.eval(x)?;
        let p = &self.params;
        let c = self.utility.optimal_rate(vx)?.rate;
        let kernel = |z: T| p.xi * (-p.xi * (x - z)).exp();
        let mut conv = T::zero();
        let half: T = lit(0.5);
        let mut k = 0;
        while k + 1 < self.len() && self.xs[k + 1] <= x + self.spacing() * lit(1e-9) {
            let (z0, z1) = (self.xs[k], self.xs[k + 1]);
            conv = conv + half * (z1 - z0) * (self.vs[k] * kernel(z0) + self.vs[k + 1] * kernel(z1));
            k += 1;
        }
        let zk = self.xs[k];
        if x - zk > T::zero() {
            conv = conv + half * (x - zk) * (self.vs[k] * kernel(zk) + v * kernel(x));
        }
        Ok((p.mu - c) * vx - (p.beta + p.lambda) * v + self.utility.value(c)? + p.lambda * conv)
    }

    /// Residual of the first-order form obtained by writing `v_x = y(v)`.
    ///
    /// `y_v` comes from a three-point difference on the `(v, v_x)` pairs, one-sided
    /// at the ends.
    pub fn riccati_residual(&self, index: usize) -> Result<RiccatiResidual<T>> {
        let n = self.len();
        if n < 3 {
            return Err(Error::Precondition("riccati residual needs 3 grid points".into()));
        }
        if index >= n {
            return Err(Error::Domain(format!("index {index} outside grid of {n} points")));
        }
        let (i0, one_sided) = if index == 0 {
            (0, true)
        } else if index == n - 1 {
            (n - 3, true)
        } else {
            (index - 1, false)
        };
        let v = &self.vs[i0..i0 + 3];
        let y = &self.vxs[i0..i0 + 3];
        let y_v = lagrange_derivative([v[0], v[1], v[2]], [y[0], y[1], y[2]], self.vs[index])?;
        Ok(RiccatiResidual {
            value: riccati_lhs(&self.params, &self.utility, self.vs[index], self.vxs[index], y_v),
            one_sided,
        })
    }
}

/// Left side of the Riccati-type first-order equation in `y(v)`.
pub fn riccati_lhs<T: Scalar>(p: &ModelParams<T>, u: &UtilitySpec<T>, v: T, y: T, y_v: T) -> T {
    let (mu, xi, beta, lambda) = (p.mu, p.xi, p.beta, p.lambda);
    match *u {
        UtilitySpec::Power { alpha } => {
            let e = y.powf(-alpha / (T::one() - alpha));
            mu * y_v * y + (xi * mu - beta - lambda) * y - xi * beta * v
                + xi * (T::one() - alpha) / alpha * e
                - e * y_v
        }
        UtilitySpec::Log => {
            (xi * mu + xi - beta - lambda) * y - xi * y.ln() - xi * beta * v - xi
                + (mu + T::one()) * y * y_v
                - y_v
        }
    }
}

/// Derivative at `at` of the quadratic through three points.
fn lagrange_derivative<T: Scalar>(xs: [T; 3], ys: [T; 3], at: T) -> Result<T> {
    let [x0, x1, x2] = xs;
    let (d01, d02, d12) = (x0 - x1, x0 - x2, x1 - x2);
    if d01 == T::zero() || d02 == T::zero() || d12 == T::zero() {
        return Err(Error::Precondition("grid not strictly monotone in v".into()));
    }
    let l0 = ((at - x1) + (at - x2)) / (d01 * d02);
    let l1 = ((at - x0) + (at - x2)) / (-d01 * d12);
    let l2 = ((at - x0) + (at - x1)) / (d02 * d12);
    Ok(ys[0] * l0 + ys[1] * l1 + ys[2] * l2)
}

fn hermite<T: Scalar>(x0: T, x1: T, y0: T, d0: T, y1: T, d1: T, x: T) -> T {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let (t2, t3) = (t * t, t * t * t);
    let two: T = lit(2.0);
    let three: T = lit(3.0);
    (two * t3 - three * t2 + T::one()) * y0
        + (t3 - two * t2 + t) * h * d0
        + (three * t2 - two * t3) * y1
        + (t3 - t2) * h * d1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sqrt_utility() -> UtilitySpec {
        UtilitySpec::Power { alpha: 0.5 }
    }

    fn table1() -> HjbSolution {
        solve_value_function(
            &ModelParams::reference(),
            &sqrt_utility(),
            1.9,
            10.0,
            &IvpConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn curvature_negative_at_table1_start() {
        let vxx: f64 = curvature_rhs(&ModelParams::reference(), &sqrt_utility(), 6.8021, 1.9).unwrap();
        assert!(vxx.is_finite() && vxx < 0.0);
    }

    #[test]
    fn curvature_singular_on_locus() {
        let p = ModelParams::reference();
        let b = 0.26f64.powf(-0.5);
        assert!(matches!(
            curvature_rhs(&p, &sqrt_utility(), 6.8, b),
            Err(Error::SingularLocus { .. })
        ));
    }

    #[test]
    fn curvature_log_at_unit_slope() {
        let p = ModelParams::reference();
        let v: f64 = 3.0;
        let got = curvature_rhs(&p, &UtilitySpec::Log, v, 1.0).unwrap();
        let expected = (p.xi * p.beta * v - (p.xi * p.mu - p.beta - p.lambda)) / p.mu;
        assert!((got - expected).abs() < 1e-14_f64);
    }

    #[test]
    fn boundary_values() {
        let p = ModelParams::reference();
        assert!((boundary_v0(&p, &sqrt_utility(), 1.9).unwrap() - 6.8021).abs() < 1e-4);
        assert!((boundary_v0(&p, &sqrt_utility(), 2.0).unwrap() - 6.8).abs() < 1e-12);
        let log = boundary_v0(&p, &UtilitySpec::Log, 1.0).unwrap();
        assert!((log - (1.26 - 1.0) / 0.15).abs() < 1e-12);
        assert!(boundary_v0(&p, &UtilitySpec::Log, 1.5).is_err());
    }

    #[test]
    fn boundary_closed_form_for_power() {
        let p = ModelParams::reference();
        for &alpha in &[0.2f64, 0.5, 0.8] {
            let u = UtilitySpec::Power { alpha };
            for &b in &[0.5f64, 1.0, 1.9, 3.0] {
                let closed = p.mu / (p.beta + p.lambda) * b
                    + (1.0 - alpha) / (alpha * (p.beta + p.lambda)) * b.powf(-alpha / (1.0 - alpha));
                assert!((boundary_v0(&p, &u, b).unwrap() - closed).abs() < 1e-12 * closed);
            }
        }
    }

    #[test]
    fn table1_endpoints() {
        let sol = table1();
        assert_eq!(sol.classification, Classification::Decaying);
        assert_eq!(sol.len(), 1001);
        let k = sol.node_index(10.0).unwrap();
        assert!((sol.vs[k] / 19.9126 - 1.0).abs() < 1e-4);
        assert!((sol.vxs[k] / 0.9752 - 1.0).abs() < 1e-4);
        assert!((sol.cs[k] / 1.0515 - 1.0).abs() < 1e-4);
        let k5 = sol.node_index(5.0).unwrap();
        assert!((sol.vs[k5] / 14.3963 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn solution_invariants() {
        let sol = table1();
        assert!(sol.vs.windows(2).all(|w| w[1] > w[0]));
        assert!(sol.vxs.iter().all(|&s| s > 0.0));
        for (&vx, &c) in sol.vxs.iter().zip(&sol.cs) {
            assert!((c - vx.powi(-2)).abs() <= 1e-12 * c);
        }
        let half = sol.len() / 2;
        assert!(sol.vxs[half..].windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn table2_is_bubble() {
        let sol = solve_value_function(
            &ModelParams::reference(),
            &sqrt_utility(),
            2.0,
            10.0,
            &IvpConfig::default(),
        )
        .unwrap();
        assert_eq!(sol.classification, Classification::Bubble);
        let k = sol.node_index(10.0).unwrap();
        assert!((sol.vs[k] / 266.2320 - 1.0).abs() < 1e-3);
        assert!((sol.vxs[k] / 100.9833 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn bubble_guard_stops_long_runs() {
        let sol = solve_value_function(
            &ModelParams::reference(),
            &sqrt_utility(),
            2.0,
            50.0,
            &IvpConfig::default(),
        )
        .unwrap();
        assert_eq!(sol.classification, Classification::Bubble);
        assert!(sol.x_end() < 50.0);
    }

    #[test]
    fn classification_edge_cases() {
        assert!(matches!(
            classify_solution(&[1.0; 20]),
            Err(Error::Indeterminate(_))
        ));
        assert!(classify_solution(&[1.0; 5]).is_err());
        let rising: Vec<f64> = (0..20).map(|i| 1.0 + i as f64).collect();
        assert_eq!(classify_solution(&rising).unwrap(), Classification::Bubble);
        let falling: Vec<f64> = (0..20).map(|i| 2.0 - 0.01 * i as f64).collect();
        assert_eq!(classify_solution(&falling).unwrap(), Classification::Decaying);
    }

    #[test]
    fn singular_start_rejected() {
        let p = ModelParams::reference();
        let b = sqrt_utility().singular_slope(p.mu);
        assert!(solve_value_function(&p, &sqrt_utility(), b, 10.0, &IvpConfig::default()).is_err());
    }

    #[test]
    fn residual_vanishes_at_origin() {
        let sol = table1();
        assert!(sol.hjb_residual(0.0).unwrap().abs() <= 1e-6);
    }

    #[test]
    fn residual_small_on_grid() {
        let sol = table1();
        let p = sol.params;
        for x in [1.0, 5.0, 10.0] {
            let (v, _) = sol.eval(x).unwrap();
            let r = sol.hjb_residual(x).unwrap();
            assert!(r.abs() <= 1e-4 * (p.beta + p.lambda) * v, "x={x} r={r}");
        }
    }

    #[test]
    fn residual_off_grid_point() {
        let sol = table1();
        let r = sol.hjb_residual(3.1237).unwrap();
        assert!(r.abs() < 1e-4, "{r}");
        assert!(sol.hjb_residual(10.5).is_err());
        assert!(sol.hjb_residual(-0.1).is_err());
    }

    #[test]
    fn residual_detects_shifted_value() {
        let mut sol = table1();
        let p = sol.params;
        for v in &mut sol.vs {
            *v += 0.1;
        }
        for x in [0.0, 1.0] {
            let r = sol.hjb_residual(x).unwrap();
            let expected = -0.1 * (p.beta + p.lambda) + 0.1 * p.lambda * (1.0 - (-p.xi * x).exp());
            assert!((r - expected).abs() < 1e-5, "x={x}: {r} vs {expected}");
            assert!(r.abs() > 1e-2);
        }
    }

    #[test]
    fn riccati_residual_small() {
        let sol = table1();
        for i in [1, 100, 500, 999] {
            let r = sol.riccati_residual(i).unwrap();
            assert!(!r.one_sided);
            assert!(r.value.abs() <= 1e-3, "i={i}: {}", r.value);
        }
        assert!(sol.riccati_residual(0).unwrap().one_sided);
        assert!(sol.riccati_residual(1000).unwrap().one_sided);
        assert!(sol.riccati_residual(1001).is_err());
    }

    #[test]
    fn riccati_constant_slope() {
        let p = ModelParams::reference();
        let y: f64 = 1.5;
        let sol = HjbSolution {
            xs: vec![0.0, 1.0, 2.0, 3.0],
            vs: vec![1.0, 2.0, 3.0, 4.0],
            vxs: vec![y; 4],
            cs: vec![y.powi(-2); 4],
            classification: Classification::Decaying,
            params: p,
            utility: sqrt_utility(),
            b: y,
        };
        let r = sol.riccati_residual(1).unwrap().value;
        let expected = (p.xi * p.mu - p.beta - p.lambda) * y - p.xi * p.beta * 2.0 + p.xi * y.powf(-1.0);
        assert!((r - expected).abs() < 1e-12, "{r} vs {expected}");
    }
}
