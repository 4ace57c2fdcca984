//! First-order optimality residuals for the composite program.

use nalgebra::DMatrix;

use crate::error::{bail, Result};
use crate::linalg::{block, inverse_pd, spectral_norm, symmetrize, SortedEigen, SortedSvd};
use crate::ops::{numerical_rank, BlockPrecision};

/// Violations of the stationarity conditions with `G = S − Θ̂⁻¹`:
///
/// * `G_x = 0` and `diag(G_y) = 0`;
/// * `G_y = λ I − M` with `M ⪰ 0`, `M L̂ = 0` (trace plus PSD constraint);
/// * `−G_yx ∈ (λγ/2) ∂‖Θ̂_yx‖⋆` (the block appears twice in `tr(ΘS)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub x_block: f64,
    pub diagonal: f64,
    /// `‖P_T(G_y) − λ U Uᵀ‖₂` on the tangent space of `L̂`.
    pub l_tangent: f64,
    /// `max(0, λ_max(P⊥ G_y P⊥) − λ)`.
    pub l_normal: f64,
    /// `‖P_T(−G_yx) − (λγ/2) U Vᵀ‖₂`.
    pub yx_tangent: f64,
    /// `max(0, ‖P⊥(G_yx)‖₂ − λγ/2)`.
    pub yx_normal: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        [self.x_block, self.diagonal, self.l_tangent, self.l_normal, self.yx_tangent, self.yx_normal]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

pub fn kkt_residuals(
    est: &BlockPrecision,
    sample_cov: &DMatrix<f64>,
    lambda: f64,
    gamma: f64,
    rank_tol: f64,
) -> Result<KktResiduals> {
    let (p, q) = (est.p, est.q);
    if sample_cov.shape() != (p + q, p + q) {
        bail!(Dimension, "covariance shape does not match the estimate");
    }
    let g = sample_cov - inverse_pd(&est.theta)?;
    let g_y = symmetrize(&block(&g, 0, 0, p, p));
    let g_yx = block(&g, 0, p, p, q);
    let g_x = block(&g, p, p, q, q);
    let diagonal = (0..p).map(|i| g_y[(i, i)].abs()).fold(0.0, f64::max);

    let r = numerical_rank(&est.l_y, rank_tol);
    let eig = SortedEigen::new(&est.l_y);
    let u = eig.vectors.columns(p - r, r).into_owned();
    let pu = &u * u.transpose();
    let perp = DMatrix::identity(p, p) - &pu;
    let tangent = &pu * &g_y + &g_y * &pu - &pu * &g_y * &pu;
    let l_tangent = spectral_norm(&symmetrize(&(tangent - &pu * lambda)));
    let normal = symmetrize(&(&perp * &g_y * &perp));
    let l_normal = if r == p { 0.0 } else { (SortedEigen::new(&normal).max() - lambda).max(0.0) };

    let half = lambda * gamma / 2.0;
    let (yx_tangent, yx_normal) = if q == 0 {
        (0.0, 0.0)
    } else {
        let k = est.theta_yx();
        let rk = numerical_rank(&k, rank_tol);
        let svd = SortedSvd::new(&k);
        let uk = svd.u.columns(0, rk).into_owned();
        let vk = svd.v.columns(0, rk).into_owned();
        let pu = &uk * uk.transpose();
        let pv = &vk * vk.transpose();
        let neg = -&g_yx;
        let t = &pu * &neg + &neg * &pv - &pu * &neg * &pv;
        let tangent = spectral_norm(&(t - &uk * vk.transpose() * half));
        let nperp = (DMatrix::identity(p, p) - pu) * &neg * (DMatrix::identity(q, q) - pv);
        (tangent, (spectral_norm(&nperp) - half).max(0.0))
    };

    Ok(KktResiduals { x_block: spectral_norm(&g_x), diagonal, l_tangent, l_normal, yx_tangent, yx_normal })
}
