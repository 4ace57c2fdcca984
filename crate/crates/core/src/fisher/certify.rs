//! Sample-size, regularization and signal-strength constants for exact
//! recovery, plus an empirical check of the second-order remainder bound.

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::linalg::{block, inverse_pd, spectral_norm, symmetrize};
use crate::ops::{block_assemble, norm_phi, BlockMode, BlockTuple, NormParams};
use crate::population::PopulationModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaInterval {
    pub lo: f64,
    pub hi: f64,
    /// `lo ≤ hi` up to a relative slack of `1e-12`.
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremConstants {
    /// `‖Σ★‖₂`
    pub psi: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub omega_y: f64,
    pub omega_yx: f64,
    pub p: usize,
    pub q: usize,
    /// `max(1, 1/γ)`
    pub m: f64,
    /// `max(1, γ)`
    pub m_bar: f64,
    pub kappa: f64,
    pub c_tilde: f64,
    pub c0: f64,
    pub c_samp: f64,
    pub c1: f64,
    pub c_sigma: f64,
    pub c_prob: f64,
}

impl TheoremConstants {
    /// Constants for a given `ψ`; the population enters only through it.
    #[allow(clippy::too_many_arguments)]
    pub fn from_psi(
        psi: f64,
        alpha: f64,
        beta: f64,
        gamma: f64,
        omega_y: f64,
        omega_yx: f64,
        p: usize,
        q: usize,
    ) -> Result<Self> {
        for (name, v) in [("psi", psi), ("alpha", alpha), ("gamma", gamma), ("omega_y", omega_y), ("omega_yx", omega_yx)] {
            if !(v > 0.0 && v.is_finite()) {
                bail!(Validation, "{name} must be positive and finite, got {v}");
            }
        }
        if !(beta >= 2.0 && beta.is_finite()) {
            bail!(Validation, "beta must be at least 2, got {beta}");
        }
        if p == 0 {
            bail!(Validation, "p must be positive");
        }
        let params = NormParams::new(gamma)?;
        let (m, m_bar) = (params.m(), params.m_bar());
        let psi2 = psi * psi;
        let psi4 = psi2 * psi2;
        let c_tilde = 352.0 * psi * psi2;
        let c0 = (1.0 / (192.0 * psi))
            .max(2.0 * psi)
            .max(1.0 / (24.0 * psi2 * (2.0 / psi2 + 8.0).max(1.0 / psi)))
            .max(psi / 8.0);
        let inner = 56.0 * psi4 + 186.0 * psi2;
        Ok(Self {
            psi,
            alpha,
            beta,
            gamma,
            omega_y,
            omega_yx,
            p,
            q,
            m,
            m_bar,
            kappa: beta * (3.0 + 16.0 * psi2 * m / alpha),
            c_tilde,
            c0,
            c_samp: c_tilde * c0,
            c1: (186.0 * psi2 + 56.0 * psi4) / 6.0,
            c_sigma: 6.0 * psi4 * inner * inner,
            c_prob: 1.0 / (247_808.0 * psi4 * psi2),
        })
    }

    fn dim(&self) -> f64 {
        (self.p + self.q) as f64
    }

    /// `C̃_samp² β⁴ α⁻² m⁶ (p + q)`
    pub fn n_min(&self) -> f64 {
        self.c_samp.powi(2) * self.beta.powi(4) / self.alpha.powi(2) * self.m.powi(6) * self.dim()
    }

    pub fn lambda_interval(&self, n: f64) -> LambdaInterval {
        let lo = self.c_tilde * (self.beta / self.alpha) * self.m.powi(2) * (self.dim() / n).sqrt();
        let hi = 1.0 / (self.beta * self.m * self.c0);
        LambdaInterval { lo, hi, feasible: lo <= hi * (1.0 + 1e-12) }
    }

    /// Smallest admissible nonzero eigenvalue of `L★_y`.
    pub fn sigma_y_threshold(&self, lambda: f64) -> f64 {
        self.c_sigma * self.beta / (self.alpha.powi(5) * self.omega_y) * self.m.powi(4) * lambda
    }

    /// Smallest admissible nonzero singular value of `Θ★_yx`.
    pub fn sigma_yx_threshold(&self, lambda: f64) -> f64 {
        self.c_sigma * self.beta / (self.alpha.powi(5) * self.omega_yx) * self.m.powi(5) * self.m_bar.powi(2) * lambda
    }

    /// Spectral error bound for the `D_y`, `L_y` and `Θ_x` blocks.
    pub fn error_bound(&self, lambda: f64) -> f64 {
        self.c1 * self.m / self.alpha.powi(2) * lambda
    }

    pub fn error_bound_yx(&self, lambda: f64) -> f64 {
        self.error_bound(lambda) * self.m_bar
    }

    /// Lower bound on the probability of structural recovery.
    pub fn success_probability(&self, n: f64, lambda: f64) -> f64 {
        let rate = self.c_prob * self.alpha.powi(2) / (self.beta.powi(2) * self.m.powi(4));
        (1.0 - 2.0 * (-rate * n * lambda * lambda).exp()).max(0.0)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn theorem_bounds(
    pop: &PopulationModel,
    alpha: f64,
    beta: f64,
    gamma: f64,
    omega_y: f64,
    omega_yx: f64,
    p: usize,
    q: usize,
) -> Result<TheoremConstants> {
    if (p, q) != (pop.p(), pop.q()) {
        bail!(Dimension, "model has (p, q) = ({}, {}), got ({p}, {q})", pop.p(), pop.q());
    }
    TheoremConstants::from_psi(pop.psi(), alpha, beta, gamma, omega_y, omega_yx, p, q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// Compares `Φ_γ[F† R(F(Δ))]` with `2 m ψ C'² Φ_γ[Δ]²`, `C' = (3 + γ) ψ`,
/// where `R(E) = (Θ★ + E)⁻¹ − Σ★ + Σ★ E Σ★`.
///
/// `R` is evaluated as `Σ★ E Σ★ E (Θ★ + E)⁻¹`, which is the same matrix
/// without the cancellation of the direct form.
pub fn remainder_check(pop: &PopulationModel, delta: &BlockTuple, gamma: f64) -> Result<RemainderCheck> {
    let params = NormParams::new(gamma)?;
    let (p, q) = (pop.p(), pop.q());
    if (delta.p(), delta.q()) != (p, q) {
        bail!(Dimension, "perturbation has (p, q) = ({}, {}), model has ({p}, {q})", delta.p(), delta.q());
    }
    let psi = pop.psi();
    let c_prime = (3.0 + gamma) * psi;
    let size = norm_phi(delta, params);
    if size > 1.0 / (2.0 * c_prime) {
        bail!(Validation, "perturbation too large: Φ_γ = {size:.3e} exceeds 1/(2C') = {:.3e}", 1.0 / (2.0 * c_prime));
    }
    let e = block_assemble(delta, BlockMode::F).into_matrix();
    let sigma = pop.sigma_star.as_matrix();
    let shifted = inverse_pd(&(pop.theta_star.as_matrix() + &e))?;
    let se = sigma * &e;
    let r = symmetrize(&(&se * &se * shifted));
    let ry = spectral_norm(&block(&r, 0, 0, p, p));
    let ryx = if q > 0 { spectral_norm(&block(&r, 0, p, p, q)) } else { 0.0 };
    let rx = if q > 0 { spectral_norm(&block(&r, p, p, q, q)) } else { 0.0 };
    let lhs = ry.max(ryx / gamma).max(rx);
    let rhs = 2.0 * params.m() * psi * c_prime * c_prime * size * size;
    Ok(RemainderCheck { lhs, rhs, ok: lhs <= rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::SymMatrix;
    use crate::population::generate_synthetic_with_scale;
    use nalgebra::DMatrix;

    fn unit_psi(gamma: f64) -> TheoremConstants {
        TheoremConstants::from_psi(1.0, 0.2, 9.0, gamma, 0.03, 0.03, 60, 2).unwrap()
    }

    #[test]
    fn unit_psi_constants() {
        let c = unit_psi(1.0);
        assert_eq!(c.c_tilde, 352.0);
        assert_eq!((c.m, c.m_bar), (1.0, 1.0));
        assert!((c.kappa - 747.0).abs() < 1e-9);
        assert_eq!(c.c0, 2.0);
        assert_eq!(c.c_samp, 704.0);
        assert!((c.c1 - 242.0 / 6.0).abs() < 1e-12);
        assert_eq!(c.c_sigma, 6.0 * 242.0 * 242.0);
        assert_eq!(c.c_prob, 1.0 / 247_808.0);
        let c2 = unit_psi(2.0);
        assert_eq!((c2.m, c2.m_bar), (1.0, 2.0));
        let c_half = unit_psi(0.5);
        assert_eq!((c_half.m, c_half.m_bar), (2.0, 1.0));
    }

    #[test]
    fn interval_closes_at_minimum_sample_size() {
        let c = unit_psi(1.0);
        let n = c.n_min();
        let at = c.lambda_interval(n);
        assert!(at.feasible);
        assert!((at.lo - 1.0 / 18.0).abs() < 1e-12 && (at.hi - 1.0 / 18.0).abs() < 1e-15);
        assert!(!c.lambda_interval(0.9 * n).feasible);
        assert!(c.lambda_interval(1.1 * n).feasible);
    }

    #[test]
    fn derived_bounds() {
        let c = unit_psi(2.0);
        let lam = 0.01;
        let sy = c.sigma_y_threshold(lam);
        assert!((sy / (c.c_sigma * 9.0 / (0.2f64.powi(5) * 0.03) * lam) - 1.0).abs() < 1e-12);
        assert!((c.sigma_yx_threshold(lam) / sy - 4.0).abs() < 1e-12);
        assert!((c.error_bound_yx(lam) - 2.0 * c.error_bound(lam)).abs() < 1e-15);
        let p = c.success_probability(1e12, 0.05);
        assert!(p > 0.0 && p < 1.0);
        assert_eq!(c.success_probability(1.0, 1e-9), 0.0);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(TheoremConstants::from_psi(1.0, 0.2, 1.5, 1.0, 0.1, 0.1, 3, 1).is_err());
        assert!(TheoremConstants::from_psi(1.0, 0.0, 9.0, 1.0, 0.1, 0.1, 3, 1).is_err());
        assert!(TheoremConstants::from_psi(-1.0, 0.2, 9.0, 1.0, 0.1, 0.1, 3, 1).is_err());
    }

    #[test]
    fn remainder_zero_and_precondition() {
        let pop = generate_synthetic_with_scale(5, 2, 1, 1, 0.5, 2).unwrap();
        let zero = BlockTuple::zeros(5, 2);
        let r = remainder_check(&pop, &zero, 1.0).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        assert!(r.ok);
        let big = BlockTuple::new(SymMatrix::identity(5), SymMatrix::zeros(5), DMatrix::zeros(5, 2), SymMatrix::zeros(2)).unwrap();
        assert!(remainder_check(&pop, &big, 1.0).is_err());
    }

    #[test]
    fn remainder_matches_direct_formula() {
        let pop = generate_synthetic_with_scale(4, 2, 1, 1, 0.5, 3).unwrap();
        let mut rng = crate::rng::seeded(1);
        let d = SymMatrix::from_diagonal(&crate::rng::gaussian_vector(&mut rng, 4));
        let l = SymMatrix::symmetric_part(&crate::rng::gaussian_matrix(&mut rng, 4, 4));
        let k = crate::rng::gaussian_matrix(&mut rng, 4, 2);
        let o = SymMatrix::symmetric_part(&crate::rng::gaussian_matrix(&mut rng, 2, 2));
        let delta = BlockTuple::new(d, l, k, o).unwrap().scale(1e-3);
        let e = block_assemble(&delta, BlockMode::F).into_matrix();
        let sigma = pop.sigma_star.as_matrix();
        let direct = inverse_pd(&(pop.theta_star.as_matrix() + &e)).unwrap() - sigma + sigma * &e * sigma;
        let lhs = spectral_norm(&block(&direct, 0, 0, 4, 4))
            .max(spectral_norm(&block(&direct, 0, 4, 4, 2)) / 1.5)
            .max(spectral_norm(&block(&direct, 4, 4, 2, 2)));
        let r = remainder_check(&pop, &delta, 1.5).unwrap();
        assert!((r.lhs - lhs).abs() < 1e-8 * lhs.max(1e-12), "{} vs {lhs}", r.lhs);
        assert!(r.ok);
    }
}
