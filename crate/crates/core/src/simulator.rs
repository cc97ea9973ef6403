//! Monte Carlo estimation of the discounted utility of dividends under a
//! fixed Markov policy `d_t = c(X_t)`.
//!
//! Between claims the reserve follows `x' = μ − c(x)`. At `x = 0` the applied
//! rate is `min(c(0), μ)`, so dividends alone never ruin the company; a policy
//! with `c(0) ≥ μ` therefore parks the reserve at 0 until the next claim ruins it.
//!
//! Every path `i` draws from its own ChaCha8 stream (`seed`, stream `i`),
//! alternating an `Exp(λ)` waiting time and an `Exp(ξ)` claim size. Path totals
//! are combined by pairwise summation in path order, so estimates are
//! bit-identical for a given seed regardless of the number of worker threads.

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::HjbSolution;
use crate::model::{ModelParams, UtilitySpec};

/// Step of the time discretisation for non-linear policies.
pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_HORIZON: f64 = 400.0;

/// Policy on a uniform reserve grid, linearly interpolated and linearly continued past the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPolicy {
    xs: Vec<f64>,
    cs: Vec<f64>,
    inv_h: f64,
}

impl GridPolicy {
    pub fn new(xs: Vec<f64>, cs: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != cs.len() {
            return Err(Error::Precondition(
                "grid policy needs matching xs and cs with at least 2 points".into(),
            ));
        }
        let h = xs[1] - xs[0];
        if !(h > 0.0) || xs.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
            return Err(Error::Precondition("grid policy abscissae must be uniform and increasing".into()));
        }
        Ok(Self { xs, cs, inv_h: h.recip() })
    }

    pub fn from_solution(sol: &HjbSolution<f64>) -> Result<Self> {
        Self::new(sol.xs.clone(), sol.cs.clone())
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn cs(&self) -> &[f64] {
        &self.cs
    }

    pub fn rate(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let pos = (x - self.xs[0]) * self.inv_h;
        let k = pos.floor().clamp(0.0, (n - 2) as f64) as usize;
        let w = pos - k as f64;
        self.cs[k] + w * (self.cs[k + 1] - self.cs[k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StrategySpec {
    /// `c(x) = max(a1·x + b1, 0)`.
    Linear { a1: f64, b1: f64 },
    Grid(GridPolicy),
    Constant(f64),
}

impl StrategySpec {
    /// Rate the policy asks for at reserve `x ≥ 0`, before the rule at zero.
    pub fn rate(&self, x: f64) -> f64 {
        match self {
            StrategySpec::Linear { a1, b1 } => (a1 * x + b1).max(0.0),
            StrategySpec::Grid(g) => g.rate(x).max(0.0),
            StrategySpec::Constant(c) => *c,
        }
    }

    /// Admissibility: finite, nonnegative and non-decreasing in the reserve.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidParameter { field: "strategy", reason });
        match self {
            StrategySpec::Linear { a1, b1 } => {
                if !(a1.is_finite() && b1.is_finite()) || *a1 < 0.0 {
                    return bad(format!("linear policy needs a finite slope >= 0, got a1 = {a1}"));
                }
            }
            StrategySpec::Grid(g) => {
                if g.cs.iter().any(|c| !c.is_finite() || *c < 0.0) {
                    return bad("grid policy rates must be finite and >= 0".into());
                }
                if g.cs.windows(2).any(|w| w[1] < w[0]) {
                    return bad("grid policy must be non-decreasing in the reserve".into());
                }
            }
            StrategySpec::Constant(c) => {
                if !(c.is_finite() && *c >= 0.0) {
                    return bad(format!("constant rate must be finite and >= 0, got {c}"));
                }
            }
        }
        Ok(())
    }
}

/// Result of one simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    /// `∫₀^{min(τ, horizon)} e^{−βt}·U(d_t) dt`.
    pub total: f64,
    pub ruin_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub ruin_fraction: f64,
    pub horizon: f64,
    /// `U(c_max)·e^{−β·horizon}/β` with `c_max` the rate at the largest reachable reserve.
    pub bias_bound: f64,
}

struct PathSim<'a> {
    p: &'a ModelParams<f64>,
    u: &'a UtilitySpec<f64>,
    s: &'a StrategySpec,
    dt: f64,
    horizon: f64,
}

impl PathSim<'_> {
    fn utility(&self, c: f64) -> f64 {
        self.u.value(c.max(0.0)).unwrap_or(0.0)
    }

    /// `∫_a^b e^{−βt} dt`.
    fn discount(&self, a: f64, b: f64) -> f64 {
        let beta = self.p.beta;
        (-beta * a).exp() * -(-beta * (b - a)).exp_m1() / beta
    }

    fn parked(&self, x: f64) -> bool {
        x <= 0.0 && self.s.rate(0.0) >= self.p.mu
    }

    fn run<R: Rng>(&self, x0: f64, rng: &mut R) -> PathOutcome {
        let waiting = Exp::new(self.p.lambda).expect("rate validated");
        let claims = Exp::new(self.p.xi).expect("rate validated");
        let mut t = 0.0;
        let mut x = x0;
        let mut total = 0.0;
        loop {
            let wait: f64 = waiting.sample(rng);
            let t_next = (t + wait).min(self.horizon);
            total += self.flow(&mut x, t, t_next);
            if t + wait >= self.horizon {
                return PathOutcome { total, ruin_time: None };
            }
            t = t_next;
            let claim: f64 = claims.sample(rng);
            x -= claim;
            if x < 0.0 {
                return PathOutcome { total, ruin_time: Some(t) };
            }
        }
    }

    /// Moves the reserve from time `t0` to `t1` without claims; returns the dividend utility earned.
    fn flow(&self, x: &mut f64, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        if self.parked(*x) {
            *x = 0.0;
            return self.utility(self.p.mu) * self.discount(t0, t1);
        }
        match self.s {
            StrategySpec::Constant(c) => self.flow_constant(x, *c, t0, t1),
            StrategySpec::Linear { a1, b1 } => self.flow_linear(x, *a1, *b1, t0, t1),
            StrategySpec::Grid(_) => self.flow_rk4(x, t0, t1),
        }
    }

    fn flow_constant(&self, x: &mut f64, c: f64, t0: f64, t1: f64) -> f64 {
        let drift = self.p.mu - c;
        let hit = if drift < 0.0 { t0 + *x / -drift } else { f64::INFINITY };
        if hit >= t1 {
            *x += drift * (t1 - t0);
            return self.utility(c) * self.discount(t0, t1);
        }
        *x = 0.0;
        self.utility(c) * self.discount(t0, hit) + self.flow(x, hit, t1)
    }

    fn flow_linear(&self, x: &mut f64, a1: f64, b1: f64, t0: f64, t1: f64) -> f64 {
        let mu = self.p.mu;
        let mut t = t0;
        // below the kink the rate is 0, U(0) = 0 and the reserve grows at μ
        if b1 < 0.0 && a1 > 0.0 {
            let kink = -b1 / a1;
            if *x < kink {
                let reach = t + (kink - *x) / mu;
                if reach >= t1 {
                    *x += mu * (t1 - t);
                    return 0.0;
                }
                *x = kink;
                t = reach;
            }
        }
        let start = *x;
        let position = |s: f64| -> f64 {
            if a1 > 0.0 {
                let eq = (mu - b1) / a1;
                eq + (start - eq) * (-a1 * s).exp()
            } else {
                start + (mu - b1) * s
            }
        };
        let hit = if b1 > mu {
            if a1 > 0.0 {
                let eq = (mu - b1) / a1;
                ((start - eq) / -eq).ln() / a1
            } else {
                start / (b1 - mu)
            }
        } else {
            f64::INFINITY
        };
        let moving = (t1 - t).min(hit);
        let earned = self.simpson_along(t, moving, |s| a1 * position(s) + b1);
        if hit >= t1 - t {
            *x = position(t1 - t).max(0.0);
            return earned;
        }
        *x = 0.0;
        earned + self.flow(x, t + hit, t1)
    }

    /// `∫_0^len e^{−β(t+s)}·U(rate(s)) ds` by composite Simpson with steps of at most `dt`.
    fn simpson_along(&self, t: f64, len: f64, rate: impl Fn(f64) -> f64) -> f64 {
        if len <= 0.0 {
            return 0.0;
        }
        let n = (len / self.dt).ceil().max(1.0) as usize;
        let h = len / n as f64;
        let g = |s: f64| (-self.p.beta * (t + s)).exp() * self.utility(rate(s));
        let mut acc = 0.0;
        let mut g_left = g(0.0);
        for i in 0..n {
            let s = i as f64 * h;
            let g_right = g(s + h);
            acc += h / 6.0 * (g_left + 4.0 * g(s + 0.5 * h) + g_right);
            g_left = g_right;
        }
        acc
    }

    fn flow_rk4(&self, x: &mut f64, t0: f64, t1: f64) -> f64 {
        let mu = self.p.mu;
        let beta = self.p.beta;
        let rhs = |y: f64| -> (f64, f64) {
            let c = self.s.rate(y.max(0.0));
            (mu - c, self.utility(c))
        };
        let full = (-beta * self.dt).exp();
        let half = (-beta * 0.5 * self.dt).exp();
        // discount inside the step is e^{−βt}·e^{−βs}
        let step = |t: f64, y: f64, h: f64| -> (f64, f64) {
            let (w_half, w_full) = if h == self.dt {
                (half, full)
            } else {
                ((-beta * 0.5 * h).exp(), (-beta * h).exp())
            };
            let (k1, q1) = rhs(y);
            let (k2, q2) = rhs(y + 0.5 * h * k1);
            let (k3, q3) = rhs(y + 0.5 * h * k2);
            let (k4, q4) = rhs(y + h * k3);
            (
                y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4),
                (-beta * t).exp() * h / 6.0 * (q1 + 2.0 * w_half * (q2 + q3) + w_full * q4),
            )
        };
        let mut t = t0;
        let mut earned = 0.0;
        while t < t1 {
            let h = self.dt.min(t1 - t);
            let (y_new, q) = step(t, *x, h);
            if y_new >= 0.0 {
                *x = y_new;
                earned += q;
                t += h;
                continue;
            }
            // reserve reaches zero inside the step: shorten the step to the crossing
            let theta = (*x / (*x - y_new)).clamp(0.0, 1.0);
            let (_, q) = step(t, *x, theta * h);
            earned += q;
            *x = 0.0;
            t += theta * h;
            if self.parked(0.0) {
                return earned + self.flow(x, t, t1);
            }
        }
        earned
    }
}

fn check_inputs(p: &ModelParams<f64>, s: &StrategySpec, x0: f64, horizon: f64, dt: f64) -> Result<()> {
    s.validate()?;
    if !(x0.is_finite() && x0 >= 0.0) {
        return Err(Error::InvalidParameter { field: "x0", reason: format!("must be >= 0, got {x0}") });
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidParameter {
            field: "horizon",
            reason: format!("must be > 0, got {horizon}"),
        });
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter { field: "dt", reason: format!("must be > 0, got {dt}") });
    }
    let rates = [("mu", p.mu), ("lambda", p.lambda), ("xi", p.xi), ("beta", p.beta)];
    for (field, v) in rates {
        let ok = if field == "lambda" { v >= 0.0 } else { v > 0.0 };
        if !(v.is_finite() && ok) {
            return Err(Error::InvalidParameter { field, reason: format!("invalid value {v}") });
        }
    }
    Ok(())
}

fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates one path on stream 0 of `seed`.
///
/// `λ = 0` is accepted here (no claims ever arrive).
pub fn simulate_path(
    p: &ModelParams<f64>,
    u: &UtilitySpec<f64>,
    s: &StrategySpec,
    x0: f64,
    horizon: f64,
    seed: u64,
) -> Result<PathOutcome> {
    simulate_path_with(p, u, s, x0, horizon, seed, DEFAULT_DT)
}

/// [`simulate_path`] with an explicit time step.
pub fn simulate_path_with(
    p: &ModelParams<f64>,
    u: &UtilitySpec<f64>,
    s: &StrategySpec,
    x0: f64,
    horizon: f64,
    seed: u64,
    dt: f64,
) -> Result<PathOutcome> {
    check_inputs(p, s, x0, horizon, dt)?;
    let sim = PathSim { p, u, s, dt, horizon };
    Ok(sim.run(x0, &mut path_rng(seed, 0)))
}

/// Mean discounted utility over `n_paths` independent paths from `x0`.
pub fn estimate_value(
    p: &ModelParams<f64>,
    u: &UtilitySpec<f64>,
    s: &StrategySpec,
    x0: f64,
    n_paths: usize,
    horizon: f64,
    seed: u64,
) -> Result<PathEstimate> {
    estimate_value_with(p, u, s, x0, n_paths, horizon, seed, DEFAULT_DT)
}

/// [`estimate_value`] with an explicit time step.
#[allow(clippy::too_many_arguments)]
pub fn estimate_value_with(
    p: &ModelParams<f64>,
    u: &UtilitySpec<f64>,
    s: &StrategySpec,
    x0: f64,
    n_paths: usize,
    horizon: f64,
    seed: u64,
    dt: f64,
) -> Result<PathEstimate> {
    check_inputs(p, s, x0, horizon, dt)?;
    if n_paths < 100 {
        return Err(Error::InvalidParameter {
            field: "n_paths",
            reason: format!("need at least 100 paths, got {n_paths}"),
        });
    }
    let sim = PathSim { p, u, s, dt, horizon };
    let outcomes: Vec<PathOutcome> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| sim.run(x0, &mut path_rng(seed, i)))
        .collect();
    let totals: Vec<f64> = outcomes.iter().map(|o| o.total).collect();
    let n = n_paths as f64;
    let mean = pairwise_sum(&totals) / n;
    let squares: Vec<f64> = totals.iter().map(|v| (v - mean) * (v - mean)).collect();
    let variance = pairwise_sum(&squares) / (n - 1.0);
    let ruined = outcomes.iter().filter(|o| o.ruin_time.is_some()).count();
    let c_max = s.rate(x0 + p.mu * horizon).max(s.rate(x0));
    Ok(PathEstimate {
        mean,
        std_error: (variance / n).sqrt(),
        n_paths,
        ruin_fraction: ruined as f64 / n,
        horizon,
        bias_bound: sim.utility(c_max) * (-p.beta * horizon).exp() / p.beta,
    })
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}
