//! Optimal dividend rates under expected discounted utility for the
//! Cramér–Lundberg model with exponential claims.
//!
//! The value function `v(x) = sup E_x ∫₀^τ e^{−βt} U(d_t) dt` solves an HJB
//! equation that, for `Exp(ξ)` claims, reduces to a second-order ODE in the
//! reserve `x`. Its initial slope `b = v_x(0)` is free; [`shooting`] locates it,
//! [`hjb`] integrates the ODE for a given `b`, [`asymptotics`] compares the
//! result with the large-reserve closed forms and [`simulator`] checks it by
//! Monte Carlo.
//!
//! ```
//! use divhjb::{solve_value_function, Classification, IvpConfig, ModelParams, UtilitySpec};
//!
//! let p: ModelParams = ModelParams::reference();
//! let u = UtilitySpec::Power { alpha: 0.5 };
//! let sol = solve_value_function(&p, &u, 1.9, 10.0, &IvpConfig::default()).unwrap();
//! assert_eq!(sol.classification, Classification::Decaying);
//! assert!((sol.vs[sol.len() - 1] - 19.9126).abs() < 1e-3);
//! ```
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar type. The simulator and the CLI use `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod cli;
pub mod config;
pub mod error;
pub mod hjb;
pub mod io;
pub mod model;
pub mod numerics;
pub mod scalar;
pub mod shooting;
pub mod simulator;

pub use asymptotics::{asymptotic_triple, convergence_diagnostic, AsymptoticTriple, ConvergenceDiagnostic};
pub use error::{Error, Result};
pub use hjb::{boundary_v0, curvature_rhs, solve_value_function, Classification, HjbSolution};
pub use model::{ModelParams, UtilitySpec};
pub use numerics::IvpConfig;
pub use scalar::Scalar;
pub use shooting::{
    evaluate_candidate, search_initial_slope, CandidateEvaluation, Label, ShootingConfig, ShootingReport,
};
pub use simulator::{estimate_value, simulate_path, GridPolicy, PathEstimate, StrategySpec};

pub type ModelParamsF64 = ModelParams<f64>;
pub type ModelParamsF32 = ModelParams<f32>;
pub type UtilitySpecF64 = UtilitySpec<f64>;
pub type UtilitySpecF32 = UtilitySpec<f32>;
pub type HjbSolutionF64 = HjbSolution<f64>;
pub type HjbSolutionF32 = HjbSolution<f32>;
pub type ShootingConfigF64 = ShootingConfig<f64>;
pub type ShootingConfigF32 = ShootingConfig<f32>;
pub type ShootingReportF64 = ShootingReport<f64>;
pub type ShootingReportF32 = ShootingReport<f32>;
