//! JSON run configuration.
//!
//! ```json
//! {
//!   "mu": 0.26, "lambda": 0.1, "xi": 0.4, "beta": 0.05,
//!   "utility": "power", "alpha": 0.5,
//!   "solve": { "b": 1.9, "x_max": 10.0 },
//!   "search": { "epsilon": 0.005 },
//!   "simulate": { "strategy": { "kind": "grid" }, "x0": 0.0, "n_paths": 100000, "seed": 42 },
//!   "asymptotics": { "x_points": [10.0] }
//! }
//! ```
//!
//! Every block is optional and unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, UtilitySpec};
use crate::numerics::IvpConfig;
use crate::shooting::ShootingConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtilityKind {
    Power,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mu: f64,
    pub lambda: f64,
    pub xi: f64,
    pub beta: f64,
    pub utility: UtilityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asymptotics: Option<AsymptoticsBlock>,
}

/// Integration tolerances; unset fields keep the integrator defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense_spacing: Option<f64>,
}

impl Tolerances {
    pub fn ivp(&self) -> IvpConfig<f64> {
        let d = IvpConfig::default();
        IvpConfig {
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            abs_tol: self.abs_tol.unwrap_or(d.abs_tol),
            max_step: self.max_step.unwrap_or(d.max_step),
            dense_spacing: self.dense_spacing.unwrap_or(d.dense_spacing),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveBlock {
    /// Initial slope; found by the search when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_schedule: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_check: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StrategyConfig {
    /// Optimal-rate column of the solution selected by the `solve` block.
    Grid,
    Linear { a1: f64, b1: f64 },
    Constant { c0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub x0: f64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

fn default_paths() -> usize {
    100_000
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticsBlock {
    /// Report ratios at these reserve levels instead of the tail samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_points: Option<Vec<f64>>,
    /// Horizon of the solve; defaults to the `solve` block's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.utility_spec()?;
        self.shooting()?.validate()?;
        self.solve_ivp().validate()?;
        if let Some(x) = self.solve.as_ref().and_then(|s| s.x_max) {
            positive("x_max", x)?;
        }
        if let Some(sim) = &self.simulate {
            if !(sim.x0.is_finite() && sim.x0 >= 0.0) {
                return Err(invalid("x0", format!("must be >= 0, got {}", sim.x0)));
            }
            if sim.n_paths < 100 {
                return Err(invalid("n_paths", format!("need at least 100 paths, got {}", sim.n_paths)));
            }
            if let Some(h) = sim.horizon {
                positive("horizon", h)?;
            }
            if let Some(dt) = sim.dt {
                positive("dt", dt)?;
            }
        }
        if let Some(a) = &self.asymptotics {
            if let Some(x) = a.x_max {
                positive("x_max", x)?;
            }
            if let Some(xs) = &a.x_points {
                if xs.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return Err(invalid("x_points", "reserve levels must be > 0".into()));
                }
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams<f64>> {
        ModelParams::new(self.mu, self.lambda, self.xi, self.beta)
    }

    pub fn utility_spec(&self) -> Result<UtilitySpec<f64>> {
        match (self.utility, self.alpha) {
            (UtilityKind::Power, Some(alpha)) => UtilitySpec::power(alpha),
            (UtilityKind::Power, None) => Err(invalid("alpha", "power utility needs an exponent".into())),
            (UtilityKind::Log, None) => Ok(UtilitySpec::Log),
            (UtilityKind::Log, Some(_)) => Err(invalid("alpha", "not used with log utility".into())),
        }
    }

    pub fn solve_b(&self) -> Option<f64> {
        self.solve.as_ref().and_then(|s| s.b)
    }

    pub fn solve_x_max(&self) -> f64 {
        self.solve.as_ref().and_then(|s| s.x_max).unwrap_or(10.0)
    }

    pub fn solve_ivp(&self) -> IvpConfig<f64> {
        self.solve
            .as_ref()
            .and_then(|s| s.tolerances)
            .unwrap_or_default()
            .ivp()
    }

    /// Search settings: model-dependent defaults overridden by the `search` block.
    pub fn shooting(&self) -> Result<ShootingConfig<f64>> {
        let mut cfg = ShootingConfig::for_model(&self.params()?, &self.utility_spec()?);
        if let Some(s) = &self.search {
            if let Some(v) = s.b_start {
                cfg.b_start = v;
            }
            if let Some(v) = &s.step_schedule {
                cfg.step_schedule = v.clone();
            }
            if let Some(v) = s.epsilon {
                cfg.epsilon = v;
            }
            if let Some(v) = s.fit_count {
                cfg.fit_count = v;
            }
            if let Some(v) = s.x_max {
                cfg.x_max = v;
            }
            cfg.mc_check = s.mc_check;
            if let Some(t) = s.tolerances {
                cfg.ivp = t.ivp();
            }
        }
        Ok(cfg)
    }
}

fn invalid(field: &'static str, reason: String) -> Error {
    Error::InvalidParameter { field, reason }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be > 0, got {v}")))
    }
}
