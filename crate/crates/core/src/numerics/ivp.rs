//! Dormand–Prince 5(4) integration with cubic Hermite dense output on a uniform grid.

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Tolerances and output spacing for [`integrate_ivp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvpConfig<T = f64> {
    pub rel_tol: T,
    pub abs_tol: T,
    pub max_step: T,
    pub dense_spacing: T,
}

impl<T: Scalar> Default for IvpConfig<T> {
    fn default() -> Self {
        Self {
            rel_tol: lit(1e-10),
            abs_tol: lit(1e-12),
            max_step: lit(0.01),
            dense_spacing: lit(0.01),
        }
    }
}

impl<T: Scalar> IvpConfig<T> {
    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("dense_spacing", self.dense_spacing),
        ] {
            if !(value.is_finite() && value > T::zero()) {
                return Err(Error::InvalidParameter {
                    field,
                    reason: format!("must be finite and > 0, got {value}"),
                });
            }
        }
        Ok(())
    }
}

/// Returned by a right-hand side that cannot be evaluated at the requested state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Singularity;

/// Why the integration stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination<T> {
    /// Reached `x_end`.
    Completed,
    /// The guard predicate fired after the step ending at `x`.
    Guard { x: T },
    /// Step size underflowed while the right-hand side kept reporting a singularity.
    Singular { x: T },
    /// The right-hand side stopped producing finite values.
    Diverged { x: T },
}

impl<T> Termination<T> {
    pub fn is_completed(&self) -> bool {
        matches!(self, Termination::Completed)
    }
}

/// States sampled on `x0, x0 + h, x0 + 2h, …` up to the stopping point.
#[derive(Debug, Clone)]
pub struct DenseSolution<T, const N: usize> {
    pub xs: Vec<T>,
    pub states: Vec<[T; N]>,
    pub termination: Termination<T>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

const MAX_STEPS: usize = 50_000_000;

// Dormand–Prince tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

enum StepFailure {
    Singular,
    NonFinite,
}

/// Integrates `y' = rhs(x, y)` from `(x0, state0)` to `x_end`.
///
/// The local error of each step is controlled by `(rel_tol, abs_tol)`; states are
/// reported on a uniform grid of spacing `dense_spacing` by cubic Hermite
/// interpolation between accepted steps. Integration stops early when `guard`
/// returns `true` after an accepted step, or when the step size underflows.
pub fn integrate_ivp<T, const N: usize, F, G>(
    mut rhs: F,
    x0: T,
    state0: [T; N],
    x_end: T,
    cfg: &IvpConfig<T>,
    mut guard: G,
) -> Result<DenseSolution<T, N>>
where
    T: Scalar,
    F: FnMut(T, &[T; N]) -> std::result::Result<[T; N], Singularity>,
    G: FnMut(T, &[T; N]) -> bool,
{
    cfg.validate()?;
    if !(x_end > x0) {
        return Err(Error::Precondition(format!(
            "integration end {x_end} must exceed start {x0}"
        )));
    }
    let f0 = rhs(x0, &state0)
        .map_err(|_| Error::Precondition(format!("right-hand side singular at x = {x0}")))?;
    if !all_finite(&f0) || !all_finite(&state0) {
        return Err(Error::Precondition(format!(
            "right-hand side not finite at x = {x0}"
        )));
    }

    let span = x_end - x0;
    let spacing = cfg.dense_spacing;
    let n_grid = (span / spacing + lit(1e-9)).floor().to_usize().unwrap_or(0);
    let grid_x = |k: usize| x0 + T::from_count(k) * spacing;

    let mut out = DenseSolution {
        xs: Vec::with_capacity(n_grid + 1),
        states: Vec::with_capacity(n_grid + 1),
        termination: Termination::Completed,
        accepted_steps: 0,
        rejected_steps: 0,
    };
    out.xs.push(x0);
    out.states.push(state0);
    let mut next_k = 1usize;

    let min_factor: T = lit(0.2);
    let max_factor: T = lit(5.0);
    let safety: T = lit(0.9);
    let fifth: T = lit(0.2);

    let mut x = x0;
    let mut y = state0;
    let mut fy = f0;
    let mut h = cfg.max_step.min(span * lit(0.01));
    let mut just_rejected = false;

    while x < x_end {
        if out.accepted_steps + out.rejected_steps > MAX_STEPS {
            out.termination = Termination::Diverged { x };
            break;
        }
        let last = x + h >= x_end;
        if last {
            h = x_end - x;
        }
        let min_step = T::epsilon() * lit(64.0) * x.abs().max(T::one());
        if h < min_step {
            out.termination = Termination::Singular { x };
            break;
        }

        match dp_step(&mut rhs, x, &y, &fy, h) {
            Ok((y_new, f_new, err)) => {
                let err_norm = error_norm(&y, &y_new, &err, cfg);
                if !err_norm.is_finite() {
                    out.rejected_steps += 1;
                    h = h * lit(0.25);
                    just_rejected = true;
                    continue;
                }
                if err_norm <= T::one() {
                    let x_new = if last { x_end } else { x + h };
                    while next_k <= n_grid && grid_x(next_k) <= x_new + spacing * lit(1e-9) {
                        let xk = grid_x(next_k).min(x_new);
                        out.xs.push(grid_x(next_k));
                        out.states.push(hermite(x, &y, &fy, x_new, &y_new, &f_new, xk));
                        next_k += 1;
                    }
                    x = x_new;
                    y = y_new;
                    fy = f_new;
                    out.accepted_steps += 1;
                    if guard(x, &y) {
                        out.termination = Termination::Guard { x };
                        break;
                    }
                    let mut factor = if err_norm == T::zero() {
                        max_factor
                    } else {
                        (safety * err_norm.powf(-fifth)).min(max_factor).max(min_factor)
                    };
                    if just_rejected {
                        factor = factor.min(T::one());
                    }
                    just_rejected = false;
                    h = (h * factor).min(cfg.max_step);
                } else {
                    out.rejected_steps += 1;
                    h = h * (safety * err_norm.powf(-fifth)).max(min_factor);
                    just_rejected = true;
                }
            }
            Err(failure) => {
                out.rejected_steps += 1;
                h = h * lit(0.25);
                just_rejected = true;
                let min_step = T::epsilon() * lit(64.0) * x.abs().max(T::one());
                if h < min_step {
                    out.termination = match failure {
                        StepFailure::Singular => Termination::Singular { x },
                        StepFailure::NonFinite => Termination::Diverged { x },
                    };
                    break;
                }
            }
        }
    }
    Ok(out)
}

#[allow(clippy::type_complexity)]
fn dp_step<T, const N: usize, F>(
    rhs: &mut F,
    x: T,
    y: &[T; N],
    f0: &[T; N],
    h: T,
) -> std::result::Result<([T; N], [T; N], [T; N]), StepFailure>
where
    T: Scalar,
    F: FnMut(T, &[T; N]) -> std::result::Result<[T; N], Singularity>,
{
    let mut k = [[T::zero(); N]; 7];
    k[0] = *f0;
    let mut y_stage = *y;
    for s in 1..7 {
        for i in 0..N {
            let mut acc = T::zero();
            for (j, kj) in k.iter().enumerate().take(s) {
                acc = acc + lit::<T>(A[s][j]) * kj[i];
            }
            y_stage[i] = y[i] + h * acc;
        }
        if !all_finite(&y_stage) {
            return Err(StepFailure::NonFinite);
        }
        k[s] = rhs(x + lit::<T>(C[s]) * h, &y_stage).map_err(|_| StepFailure::Singular)?;
        if !all_finite(&k[s]) {
            return Err(StepFailure::NonFinite);
        }
    }
    // stage 7 is evaluated at the fifth-order solution (FSAL)
    let y_new = y_stage;
    let mut err = [T::zero(); N];
    for i in 0..N {
        let mut acc = T::zero();
        for (s, ks) in k.iter().enumerate() {
            acc = acc + lit::<T>(E[s]) * ks[i];
        }
        err[i] = h * acc;
    }
    Ok((y_new, k[6], err))
}

fn error_norm<T: Scalar, const N: usize>(
    y: &[T; N],
    y_new: &[T; N],
    err: &[T; N],
    cfg: &IvpConfig<T>,
) -> T {
    let mut sum = T::zero();
    for i in 0..N {
        let scale = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
        let r = err[i] / scale;
        sum = sum + r * r;
    }
    (sum / T::from_count(N)).sqrt()
}

fn hermite<T: Scalar, const N: usize>(
    x0: T,
    y0: &[T; N],
    f0: &[T; N],
    x1: T,
    y1: &[T; N],
    f1: &[T; N],
    x: T,
) -> [T; N] {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let two: T = lit(2.0);
    let three: T = lit(3.0);
    let h00 = two * t3 - three * t2 + T::one();
    let h10 = t3 - two * t2 + t;
    let h01 = three * t2 - two * t3;
    let h11 = t3 - t2;
    let mut out = [T::zero(); N];
    for i in 0..N {
        out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
    }
    out
}

fn all_finite<T: Scalar, const N: usize>(v: &[T; N]) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_problem(rate: f64, cfg: &IvpConfig) -> DenseSolution<f64, 1> {
        integrate_ivp(
            |_, y: &[f64; 1]| Ok([rate * y[0]]),
            0.0,
            [1.0],
            10.0,
            cfg,
            |_, _| false,
        )
        .unwrap()
    }

    #[test]
    fn decaying_exponential() {
        let cfg = IvpConfig::default();
        let sol = integrate_ivp(
            |_, y: &[f64; 1]| Ok([-y[0]]),
            0.0,
            [1.0],
            1.0,
            &cfg,
            |_, _| false,
        )
        .unwrap();
        assert!(sol.termination.is_completed());
        assert_eq!(sol.xs.len(), 101);
        let last = sol.states.last().unwrap()[0];
        assert!((last - (-1.0f64).exp()).abs() < 1e-9);
        assert!((sol.xs[100] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_family_within_tolerance() {
        let cfg = IvpConfig {
            rel_tol: 1e-8,
            ..IvpConfig::default()
        };
        for rate in [-1.0, 0.0, 1.0] {
            let sol = exp_problem(rate, &cfg);
            for (x, s) in sol.xs.iter().zip(&sol.states) {
                let exact = (rate * x).exp();
                assert!(
                    (s[0] - exact).abs() <= 10.0 * cfg.rel_tol * exact.max(1.0),
                    "rate {rate} x {x}: {} vs {exact}",
                    s[0]
                );
            }
        }
    }

    #[test]
    fn tighter_tolerance_never_worse() {
        let mut previous = f64::INFINITY;
        for k in 0..8 {
            let cfg = IvpConfig {
                rel_tol: 1e-6 / 2f64.powi(k),
                abs_tol: 1e-14,
                max_step: 1.0,
                dense_spacing: 0.5,
            };
            let sol = exp_problem(1.0, &cfg);
            let err = (sol.states.last().unwrap()[0] - 10f64.exp()).abs();
            assert!(err <= previous * (1.0 + 1e-9), "k={k}: {err} > {previous}");
            previous = err;
        }
    }

    #[test]
    fn guard_stops_early() {
        let cfg = IvpConfig::default();
        let sol = integrate_ivp(
            |_, y: &[f64; 2]| Ok([y[1], y[1]]),
            0.0,
            [1.0, 1.0],
            10.0,
            &cfg,
            |_, y| y[1] > 10.0,
        )
        .unwrap();
        match sol.termination {
            Termination::Guard { x } => assert!((x - 10f64.ln()).abs() < 0.02),
            other => panic!("expected guard, got {other:?}"),
        }
        assert!(*sol.xs.last().unwrap() <= 10f64.ln() + 0.01);
    }

    #[test]
    fn singular_rhs_reported() {
        // y' = 1 / (1 - x) style blow-up surfaced as a singularity past x = 0.5
        let cfg = IvpConfig::default();
        let sol = integrate_ivp(
            |x: f64, _: &[f64; 1]| if x > 0.5 { Err(Singularity) } else { Ok([1.0]) },
            0.0,
            [0.0],
            1.0,
            &cfg,
            |_, _| false,
        )
        .unwrap();
        match sol.termination {
            Termination::Singular { x } => assert!((x - 0.5).abs() < 1e-6),
            other => panic!("expected singular stop, got {other:?}"),
        }
    }

    #[test]
    fn blow_up_reported_as_divergence_or_singular() {
        // y' = y^2 from y(0)=1 blows up at x = 1
        let cfg = IvpConfig::default();
        let sol = integrate_ivp(
            |_, y: &[f64; 1]| Ok([y[0] * y[0]]),
            0.0,
            [1.0],
            2.0,
            &cfg,
            |_, _| false,
        )
        .unwrap();
        assert!(!sol.termination.is_completed());
        assert!(*sol.xs.last().unwrap() <= 1.0);
    }

    #[test]
    fn rejects_bad_interval() {
        let cfg = IvpConfig::default();
        let r = integrate_ivp(|_, y: &[f64; 1]| Ok(*y), 1.0, [1.0], 1.0, &cfg, |_, _| false);
        assert!(r.is_err());
    }
}
