//! Population composite factor models, synthetic generators and sampling.
//!
//! A model is `y = A x + B_u ζ_u + ε` with `x ~ N(0, Σ_x)`, `ζ_u ~ N(0, Σ_ζ)`
//! and `ε ~ N(0, diag(σ_ε))`. Its joint precision splits as
//! `Θ_y = D − L` with `D` diagonal and `L ⪰ 0` of rank `k_u`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::linalg::{block, cholesky, condition_number, inverse_pd, rank_relative, spectral_norm, symmetrize, SortedEigen, SortedSvd};
use crate::ops::{min_principal_angle, BlockPrecision, SymMatrix};
use crate::rng;

/// Column spaces of `A` and `B_u` closer than this (radians) are rejected.
const TRANSVERSALITY_EPS_RAD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationModel {
    pub a: DMatrix<f64>,
    pub b_u: DMatrix<f64>,
    pub sigma_zeta_u: SymMatrix,
    pub sigma_eps: DVector<f64>,
    pub sigma_x: SymMatrix,
    pub sigma_star: SymMatrix,
    pub theta_star: SymMatrix,
    pub d_star: DVector<f64>,
    pub l_star: SymMatrix,
    pub k_x: usize,
    pub k_u: usize,
}

impl PopulationModel {
    pub fn p(&self) -> usize {
        self.a.nrows()
    }

    pub fn q(&self) -> usize {
        self.a.ncols()
    }

    pub fn theta_y(&self) -> DMatrix<f64> {
        block(&self.theta_star, 0, 0, self.p(), self.p())
    }

    pub fn theta_yx(&self) -> DMatrix<f64> {
        block(&self.theta_star, 0, self.p(), self.p(), self.q())
    }

    pub fn theta_x(&self) -> DMatrix<f64> {
        block(&self.theta_star, self.p(), self.p(), self.q(), self.q())
    }

    pub fn precision(&self) -> BlockPrecision {
        BlockPrecision {
            theta: self.theta_star.clone(),
            d_y: self.d_star.clone(),
            l_y: self.l_star.clone(),
            p: self.p(),
            q: self.q(),
        }
    }

    /// `‖Σ★‖₂`
    pub fn psi(&self) -> f64 {
        spectral_norm(&self.sigma_star)
    }

    /// Smallest nonzero eigenvalue of `L★` (zero when `k_u = 0`).
    pub fn sigma_y_min(&self) -> f64 {
        if self.k_u == 0 {
            return 0.0;
        }
        let e = SortedEigen::new(&self.l_star);
        e.values[self.p() - self.k_u]
    }

    /// Smallest nonzero singular value of `Θ★_yx` (zero when `k_x = 0`).
    pub fn sigma_yx_min(&self) -> f64 {
        if self.k_x == 0 {
            return 0.0;
        }
        SortedSvd::new(&self.theta_yx()).s[self.k_x - 1]
    }

    pub fn condition_number(&self) -> f64 {
        condition_number(&self.sigma_star)
    }
}

/// Builds the population covariance and precision from the model parameters.
///
/// Rejects models whose regression and latent-factor column spaces are not
/// transverse.
pub fn build_population(
    a: DMatrix<f64>,
    b_u: DMatrix<f64>,
    sigma_zeta_u: SymMatrix,
    sigma_eps: DVector<f64>,
    sigma_x: SymMatrix,
) -> Result<PopulationModel> {
    let model = build_population_unchecked(a, b_u, sigma_zeta_u, sigma_eps, sigma_x)?;
    if model.k_x > 0 && model.k_u > 0 {
        let angle = min_principal_angle(&model.a, &model.b_u)?.to_radians();
        if angle <= TRANSVERSALITY_EPS_RAD {
            bail!(Validation, "column spaces of A and B_u intersect (angle {angle:.3e} rad)");
        }
    }
    Ok(model)
}

/// As [`build_population`] without the transversality check, for studying
/// degenerate configurations.
pub fn build_population_unchecked(
    a: DMatrix<f64>,
    b_u: DMatrix<f64>,
    sigma_zeta_u: SymMatrix,
    sigma_eps: DVector<f64>,
    sigma_x: SymMatrix,
) -> Result<PopulationModel> {
    let (p, q) = a.shape();
    let ku_cols = b_u.ncols();
    if b_u.nrows() != p || sigma_eps.len() != p || sigma_x.dim() != q || sigma_zeta_u.dim() != ku_cols {
        bail!(
            Dimension,
            "model blocks disagree: A {p}x{q}, B_u {}x{ku_cols}, Σ_ε {}, Σ_x {}, Σ_ζ {}",
            b_u.nrows(),
            sigma_eps.len(),
            sigma_x.dim(),
            sigma_zeta_u.dim()
        );
    }
    if p == 0 {
        bail!(Dimension, "need at least one response");
    }
    if sigma_eps.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        bail!(Validation, "noise variances must be positive");
    }
    if !sigma_x.is_positive_definite() {
        bail!(NotPositiveDefinite, "covariate covariance");
    }
    if ku_cols > 0 && !sigma_zeta_u.is_positive_definite() {
        bail!(NotPositiveDefinite, "latent factor covariance");
    }
    if a.iter().chain(b_u.iter()).any(|x| !x.is_finite()) {
        bail!(Validation, "loadings must be finite");
    }

    let k_x = rank_relative(&a, 1e-10);
    let k_u = rank_relative(&b_u, 1e-10);

    // Conditional precision of y given x via Woodbury.
    let d_star = sigma_eps.map(|s| 1.0 / s);
    let l_star = if ku_cols == 0 {
        DMatrix::zeros(p, p)
    } else {
        let db = DMatrix::from_diagonal(&d_star) * &b_u;
        let inner = inverse_pd(&sigma_zeta_u)? + b_u.transpose() * &db;
        symmetrize(&(&db * inverse_pd(&symmetrize(&inner))? * db.transpose()))
    };
    let theta_y = DMatrix::from_diagonal(&d_star) - &l_star;
    let theta_yx = -(&theta_y * &a);
    let theta_x = inverse_pd(&sigma_x)? + a.transpose() * &theta_y * &a;

    let cov_y = &a * &*sigma_x * a.transpose() + &b_u * &*sigma_zeta_u * b_u.transpose() + DMatrix::from_diagonal(&sigma_eps);
    let cov_yx = &a * &*sigma_x;

    let sigma_star = assemble_joint(&cov_y, &cov_yx, &sigma_x);
    let theta_star = assemble_joint(&theta_y, &theta_yx, &theta_x);
    if !theta_star.is_positive_definite() {
        bail!(NotPositiveDefinite, "population precision");
    }
    Ok(PopulationModel {
        a,
        b_u,
        sigma_zeta_u,
        sigma_eps,
        sigma_x,
        sigma_star,
        theta_star,
        d_star,
        l_star: SymMatrix::symmetric_part(&l_star),
        k_x,
        k_u,
    })
}

fn assemble_joint(yy: &DMatrix<f64>, yx: &DMatrix<f64>, xx: &DMatrix<f64>) -> SymMatrix {
    let (p, q) = yx.shape();
    let mut m = DMatrix::zeros(p + q, p + q);
    m.view_mut((0, 0), (p, p)).copy_from(yy);
    m.view_mut((0, p), (p, q)).copy_from(yx);
    m.view_mut((p, 0), (q, p)).copy_from(&yx.transpose());
    m.view_mut((p, p), (q, q)).copy_from(xx);
    SymMatrix::symmetric_part(&m)
}

/// Precision of a factor model over the responses alone: `diag(d) − l`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModelParams {
    pub d: DVector<f64>,
    pub l: SymMatrix,
}

impl FactorModelParams {
    pub fn new(d: DVector<f64>, l: SymMatrix) -> Result<Self> {
        if d.len() != l.dim() {
            bail!(Dimension, "diagonal has length {}, low-rank block is {}", d.len(), l.dim());
        }
        if l.dim() > 0 && l.min_eigenvalue() < -1e-8 {
            bail!(Validation, "low-rank block is not positive semidefinite");
        }
        let fm = Self { d, l };
        if !fm.precision().is_positive_definite() {
            bail!(NotPositiveDefinite, "factor model precision");
        }
        Ok(fm)
    }

    pub fn p(&self) -> usize {
        self.d.len()
    }

    pub fn precision(&self) -> SymMatrix {
        SymMatrix::symmetric_part(&(DMatrix::from_diagonal(&self.d) - &*self.l))
    }
}

/// Factor model induced on `y` after marginalizing over `x`:
/// `(D★, L★ + Θ★_yx Θ★_x⁻¹ Θ★_xy)`.
pub fn marginalize_factor(pop: &PopulationModel) -> Result<FactorModelParams> {
    marginalize_precision(&pop.precision())
}

/// Same map applied to any block precision.
pub fn marginalize_precision(est: &BlockPrecision) -> Result<FactorModelParams> {
    let k = est.theta_yx();
    let extra = if est.q == 0 { DMatrix::zeros(est.p, est.p) } else { &k * inverse_pd(&est.theta_x())? * k.transpose() };
    Ok(FactorModelParams { d: est.d_y.clone(), l: SymMatrix::symmetric_part(&(&*est.l_y + extra)) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredParameters {
    pub a: DMatrix<f64>,
    pub b_u: DMatrix<f64>,
    pub sigma_eps: DVector<f64>,
}

/// Recovers `(A, B_u, Σ_ε)` from a precision, with `B_u` defined up to rotation.
///
/// `B_u B_uᵀ = (D − L)⁻¹ − D⁻¹`; its rank is taken as the numerical rank of `L`.
pub fn recover_parameters(est: &BlockPrecision, rank_tol: f64) -> Result<RecoveredParameters> {
    let theta_y = est.theta_y();
    let theta_y_inv = inverse_pd(&theta_y)?;
    if est.d_y.iter().any(|&d| d <= 0.0) {
        bail!(NotPositiveDefinite, "diagonal block has a non-positive entry");
    }
    let a = -(&theta_y_inv * est.theta_yx());
    let d_inv = est.d_y.map(|d| 1.0 / d);
    let gram = symmetrize(&(theta_y_inv - DMatrix::from_diagonal(&d_inv)));
    let e = SortedEigen::new(&gram);
    if e.min() < -1e-8 {
        bail!(NotPositiveDefinite, "(D − L)⁻¹ − D⁻¹ has eigenvalue {:.3e}", e.min());
    }
    let r = rank_relative(&est.l_y, rank_tol);
    let p = est.p;
    let mut b_u = DMatrix::zeros(p, r);
    for j in 0..r {
        let idx = p - 1 - j;
        let scale = e.values[idx].max(0.0).sqrt();
        b_u.set_column(j, &(e.vectors.column(idx) * scale));
    }
    Ok(RecoveredParameters { a, b_u, sigma_eps: d_inv })
}

/// Observations stacked as rows `[y | x]`, with the sample covariance
/// `(1/n) Σ z zᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub p: usize,
    pub q: usize,
    pub rows: DMatrix<f64>,
    pub sample_cov: SymMatrix,
}

impl Dataset {
    pub fn new(rows: DMatrix<f64>, p: usize) -> Result<Self> {
        let (n, cols) = rows.shape();
        if n == 0 {
            bail!(Validation, "dataset has no observations");
        }
        if p == 0 || p > cols {
            bail!(Dimension, "p = {p} is invalid for {cols} columns");
        }
        if rows.iter().any(|x| !x.is_finite()) {
            bail!(Validation, "dataset contains non-finite values");
        }
        let sample_cov = SymMatrix::symmetric_part(&(rows.transpose() * &rows / n as f64));
        Ok(Self { p, q: cols - p, rows, sample_cov })
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    /// Restriction to the responses.
    pub fn y_only(&self) -> Dataset {
        let rows = self.rows.columns(0, self.p).into_owned();
        let cov = SymMatrix::symmetric_part(&block(&self.sample_cov, 0, 0, self.p, self.p));
        Dataset { p: self.p, q: 0, rows, sample_cov: cov }
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        if idx.iter().any(|&i| i >= self.n()) {
            bail!(Dimension, "row index out of range");
        }
        Dataset::new(self.rows.select_rows(idx.iter()), self.p)
    }

    /// Subtracts the column means.
    pub fn centered(&self) -> Dataset {
        let mut rows = self.rows.clone();
        for mut c in rows.column_iter_mut() {
            let mean = c.mean();
            c.add_scalar_mut(-mean);
        }
        Dataset::new(rows, self.p).expect("centering keeps the shape")
    }
}

/// Draws `n` i.i.d. rows from `N(0, Σ★)`.
pub fn sample_observations(pop: &PopulationModel, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        bail!(Validation, "sample size must be positive");
    }
    let chol = cholesky(&pop.sigma_star).ok_or_else(|| crate::Error::NotPositiveDefinite("population covariance".into()))?;
    let mut rng = rng::seeded(seed);
    let xi = rng::gaussian_matrix(&mut rng, n, pop.p() + pop.q());
    Dataset::new(xi * chol.l().transpose(), pop.p())
}

fn validate_synthetic(p: usize, q: usize, k_x: usize, k_u: usize) -> Result<()> {
    if p == 0 {
        bail!(Dimension, "need at least one response");
    }
    if k_x > p.min(q) {
        bail!(Validation, "k_x = {k_x} exceeds min(p, q) = {}", p.min(q));
    }
    if k_x + k_u > p {
        bail!(Validation, "k_x + k_u = {} exceeds p = {p}", k_x + k_u);
    }
    Ok(())
}

// Gaussian loadings normalized to unit spectral norm.
fn raw_loadings(p: usize, q: usize, k_x: usize, k_u: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = rng::seeded(seed);
    let normalize = |m: DMatrix<f64>| {
        let s = spectral_norm(&m);
        if s > 0.0 { m / s } else { m }
    };
    let a = if k_x == 0 {
        DMatrix::zeros(p, q)
    } else {
        let left = rng::gaussian_matrix(&mut rng, p, k_x);
        let right = rng::gaussian_matrix(&mut rng, k_x, q);
        normalize(left * right)
    };
    let b = if k_u == 0 { DMatrix::zeros(p, 0) } else { normalize(rng::gaussian_matrix(&mut rng, p, k_u)) };
    (a, b)
}

fn scaled_model(a: &DMatrix<f64>, b: &DMatrix<f64>, tau: f64) -> Result<PopulationModel> {
    let (p, q) = a.shape();
    let k_u = b.ncols();
    build_population(
        a * tau,
        b * tau,
        SymMatrix::identity(k_u),
        DVector::from_element(p, 1.0),
        SymMatrix::identity(q),
    )
}

// Condition number of the joint covariance at scale tau, without the full build.
fn joint_condition(a: &DMatrix<f64>, b: &DMatrix<f64>, tau: f64) -> f64 {
    let (p, q) = a.shape();
    let yy = (a * a.transpose() + b * b.transpose()) * (tau * tau) + DMatrix::identity(p, p);
    condition_number(&assemble_joint(&yy, &(a * tau), &DMatrix::identity(q, q)))
}

/// Random model with unit noise and covariate covariances, loadings drawn
/// from Gaussians, and a common scale `τ` chosen as large as possible
/// subject to `cond(Θ★) ≤ cond_bound` (bisection over `[1e-4, 10]`).
pub fn generate_synthetic(p: usize, q: usize, k_x: usize, k_u: usize, cond_bound: f64, seed: u64) -> Result<PopulationModel> {
    validate_synthetic(p, q, k_x, k_u)?;
    if !(cond_bound > 1.0) {
        bail!(Validation, "condition bound must exceed 1, got {cond_bound}");
    }
    let (a, b) = raw_loadings(p, q, k_x, k_u, seed);
    let (mut lo, mut hi) = (1e-4, 10.0);
    if joint_condition(&a, &b, hi) <= cond_bound {
        return scaled_model(&a, &b, hi);
    }
    if joint_condition(&a, &b, lo) > cond_bound {
        bail!(Validation, "no scale in [1e-4, 10] meets condition bound {cond_bound}");
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if joint_condition(&a, &b, mid) <= cond_bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    scaled_model(&a, &b, lo)
}

/// Same generator with a fixed scale `τ`: `‖A‖₂ = ‖B_u‖₂ = τ`.
pub fn generate_synthetic_with_scale(p: usize, q: usize, k_x: usize, k_u: usize, tau: f64, seed: u64) -> Result<PopulationModel> {
    validate_synthetic(p, q, k_x, k_u)?;
    if !(tau > 0.0 && tau.is_finite()) {
        bail!(Validation, "scale must be positive, got {tau}");
    }
    let (a, b) = raw_loadings(p, q, k_x, k_u, seed);
    scaled_model(&a, &b, tau)
}

/// Row indices `0..n` shuffled deterministically.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    idx
}
