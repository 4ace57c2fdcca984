//! Convex estimators for the composite and factor programs.

pub mod admm;
pub mod kkt;
pub mod prox;

pub use admm::{
    composite_objective, solve_composite, solve_composite_cov, solve_factor, solve_factor_cov, SolveReport,
    SolverOptions, WarmStart,
};
pub use kkt::{kkt_residuals, KktResiduals};
pub use prox::{neg_log_likelihood, prox_logdet, prox_nuclear, prox_trace_psd};
