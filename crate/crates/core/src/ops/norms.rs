//! Weighted block norms.

use nalgebra::DMatrix;

use crate::error::{bail, Result};
use crate::linalg::{rank_relative, spectral_norm};
use crate::ops::blocks::BlockTuple;

/// Default relative threshold for counting singular values.
pub const DEFAULT_RANK_TOL: f64 = 1e-3;

/// Trade-off weight `γ` together with the derived constants `m` and `m̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormParams {
    gamma: f64,
}

impl NormParams {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            bail!(Validation, "gamma must be positive and finite, got {gamma}");
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `max(1, 1/γ)`
    pub fn m(&self) -> f64 {
        (1.0 / self.gamma).max(1.0)
    }

    /// `max(1, γ)`
    pub fn m_bar(&self) -> f64 {
        self.gamma.max(1.0)
    }
}

/// `max{‖D‖₂, ‖L‖₂, ‖K‖₂/γ, ‖O‖₂}`
pub fn norm_phi(t: &BlockTuple, params: NormParams) -> f64 {
    spectral_norm(&t.d)
        .max(spectral_norm(&t.l))
        .max(spectral_norm(&t.k) / params.gamma)
        .max(spectral_norm(&t.o))
}

/// `max{‖L‖₂, ‖K‖₂/γ}`
pub fn norm_gamma(l: &DMatrix<f64>, k: &DMatrix<f64>, params: NormParams) -> f64 {
    spectral_norm(l).max(spectral_norm(k) / params.gamma)
}

/// Count of singular values above `rel_tol` times the largest.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    rank_relative(m, rel_tol)
}
