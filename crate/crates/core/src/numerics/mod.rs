//! Self-contained numerical kernels used by the solver, the shooting search and the simulator.

pub mod fit;
pub mod ivp;
pub mod quad;

pub use fit::{fit_linear, fit_log, fit_power, LinearFit, LogFit, PowerFit};
pub use ivp::{integrate_ivp, DenseSolution, IvpConfig, Singularity, Termination};
pub use quad::{quad_exp_weight, quad_exp_weight_with, QuadConfig, Upper};
