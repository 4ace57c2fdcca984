//! Fisher-information conditions for identifiability.
//!
//! The Fisher information of the Gaussian likelihood at `Θ★` acts on symmetric
//! matrices as `M ↦ Σ★ M Σ★`. The gains `χ`, `Ξ` and the cross term `φ` of
//! that operator, restricted to the subspaces `H = W × T_y × T_yx × S^q` and
//! `H[2,3] = T_y × T_yx`, are estimated over a family of tangent spaces near
//! the population ones.

mod certify;
mod quantities;

pub use certify::{
    remainder_check, theorem_bounds, LambdaInterval, RemainderCheck, TheoremConstants,
};
pub use quantities::{
    aggregate_assumptions, estimate_quantities, family_seed, verify_assumptions, AssumptionReport, EstimatorOptions,
    FisherQuantities,
};

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{bail, Result};
use crate::linalg::{spectral_norm, symmetrize};
use crate::ops::{rho_distance, tangent_angle, tangent_of_kind, SymMatrix, TangentKind, TangentSpace};
use crate::population::PopulationModel;
use crate::rng;

/// `M ↦ Σ★ M Σ★`
#[derive(Debug, Clone, PartialEq)]
pub struct FisherOperator {
    pub sigma_star: SymMatrix,
}

impl FisherOperator {
    pub fn new(sigma_star: SymMatrix) -> Result<Self> {
        if !sigma_star.is_positive_definite() {
            bail!(NotPositiveDefinite, "covariance for the Fisher operator");
        }
        Ok(Self { sigma_star })
    }

    pub fn from_population(pop: &PopulationModel) -> Self {
        Self { sigma_star: pop.sigma_star.clone() }
    }

    pub fn dim(&self) -> usize {
        self.sigma_star.dim()
    }

    /// Applies the operator to any square matrix of matching size.
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.shape() != (self.dim(), self.dim()) {
            bail!(Dimension, "expected a {0}x{0} matrix, got {1}x{2}", self.dim(), m.nrows(), m.ncols());
        }
        Ok(&*self.sigma_star * m * &*self.sigma_star)
    }
}

pub fn fisher_apply(op: &FisherOperator, m: &SymMatrix) -> Result<SymMatrix> {
    Ok(SymMatrix::symmetric_part(&op.apply(m)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyOrigin {
    Nominal,
    Perturbed { omega_y: f64, omega_yx: f64, seed: u64, index: u64 },
}

/// `H' = W × T'_y × T'_yx × S^q`. The diagonal and `S^q` factors are fixed,
/// so only the two tangent spaces are stored.
#[derive(Debug, Clone)]
pub struct SubspaceFamily {
    pub t_y: TangentSpace,
    pub t_yx: TangentSpace,
    pub origin: FamilyOrigin,
    /// `ρ` to the nominal tangent spaces.
    pub rho_y: f64,
    pub rho_yx: f64,
    /// Largest principal angle to the nominal tangent spaces, in degrees.
    pub angle_y: f64,
    pub angle_yx: f64,
}

impl SubspaceFamily {
    pub fn max_angle(&self) -> f64 {
        self.angle_y.max(self.angle_yx)
    }

    pub fn p(&self) -> usize {
        self.t_y.shape().0
    }

    pub fn q(&self) -> usize {
        self.t_yx.shape().1
    }
}

/// Tangent spaces at `L★_y` and `Θ★_yx`.
pub fn nominal_family(pop: &PopulationModel) -> Result<SubspaceFamily> {
    Ok(SubspaceFamily {
        t_y: tangent_of_kind(&pop.l_star, pop.k_u, TangentKind::Symmetric)?,
        t_yx: tangent_of_kind(&pop.theta_yx(), pop.k_x, TangentKind::Rectangular)?,
        origin: FamilyOrigin::Nominal,
        rho_y: 0.0,
        rho_yx: 0.0,
        angle_y: 0.0,
        angle_yx: 0.0,
    })
}

const OMEGA_FLOOR: f64 = 1e-9;

// Finds δ with ρ(T(base + δ G), nominal) in [0.8ω, ω].
fn perturb(
    base: &DMatrix<f64>,
    direction: &DMatrix<f64>,
    rank: usize,
    kind: TangentKind,
    nominal: &TangentSpace,
    omega: f64,
) -> Result<Option<(TangentSpace, f64)>> {
    let eval = |delta: f64| -> Result<(TangentSpace, f64)> {
        let t = tangent_of_kind(&(base + direction * delta), rank, kind)?;
        let rho = rho_distance(&t, nominal)?;
        Ok((t, rho))
    };
    let in_band = |rho: f64| rho >= 0.8 * omega && rho <= omega;
    let mut lo = 0.0;
    let mut hi = omega * spectral_norm(base).max(1e-12);
    let mut probe = eval(hi)?;
    let mut doublings = 0;
    while probe.1 < 0.8 * omega && doublings < 60 {
        lo = hi;
        hi *= 2.0;
        probe = eval(hi)?;
        doublings += 1;
    }
    if in_band(probe.1) {
        return Ok(Some(probe));
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        let cand = eval(mid)?;
        if in_band(cand.1) {
            return Ok(Some(cand));
        }
        if cand.1 > omega {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(None)
}

/// The nominal family followed by up to `n_samples` perturbed families.
///
/// Each perturbed family moves `L★_y` and `Θ★_yx` along random directions by a
/// step found by bisection so that `ρ` to the nominal space lands in
/// `[0.8ω, ω]`. Samples whose search fails are skipped with a warning. When
/// both radii are below `1e-9` only the nominal family is returned.
pub fn sample_family(
    pop: &PopulationModel,
    omega_y: f64,
    omega_yx: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<SubspaceFamily>> {
    for (name, w) in [("omega_y", omega_y), ("omega_yx", omega_yx)] {
        if !(w > 0.0 && w < 1.0) {
            bail!(Validation, "{name} must lie in (0, 1), got {w}");
        }
    }
    let nominal = nominal_family(pop)?;
    let mut out = alloc::vec![nominal.clone()];
    if omega_y < OMEGA_FLOOR && omega_yx < OMEGA_FLOOR {
        log::info!("perturbation radii below {OMEGA_FLOOR:e}; returning the nominal family only");
        return Ok(out);
    }
    let (p, q) = (pop.p(), pop.q());
    let theta_yx = pop.theta_yx();
    for index in 0..n_samples as u64 {
        let mut rng = rng::stream(seed, index + 1);
        let g_y = symmetrize(&rng::gaussian_matrix(&mut rng, p, p));
        let g_y = &g_y / spectral_norm(&g_y);
        let g_yx = rng::gaussian_matrix(&mut rng, p, q);
        let g_yx = &g_yx / spectral_norm(&g_yx).max(1e-300);

        let y = if pop.k_u == 0 || omega_y < OMEGA_FLOOR {
            Some((nominal.t_y.clone(), 0.0))
        } else {
            perturb(&pop.l_star, &g_y, pop.k_u, TangentKind::Symmetric, &nominal.t_y, omega_y)?
        };
        let yx = if pop.k_x == 0 || omega_yx < OMEGA_FLOOR {
            Some((nominal.t_yx.clone(), 0.0))
        } else {
            perturb(&theta_yx, &g_yx, pop.k_x, TangentKind::Rectangular, &nominal.t_yx, omega_yx)?
        };
        let (Some((t_y, rho_y)), Some((t_yx, rho_yx))) = (y, yx) else {
            log::warn!("perturbation search failed for sample {index}; skipping");
            continue;
        };
        let angle_y = tangent_angle(&t_y, &nominal.t_y)?;
        let angle_yx = tangent_angle(&t_yx, &nominal.t_yx)?;
        out.push(SubspaceFamily {
            t_y,
            t_yx,
            origin: FamilyOrigin::Perturbed { omega_y, omega_yx, seed, index },
            rho_y,
            rho_yx,
            angle_y,
            angle_yx,
        });
    }
    Ok(out)
}
