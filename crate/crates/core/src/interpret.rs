//! Regularization sweeps and selection of interpretable composite models.
//!
//! A candidate qualifies at dimension `d` when its ranks are consistent with
//! a reference factor model `(D̃, L̃)` over the responses:
//!
//! 1. `rank(Θ̂_yx) = d`
//! 2. `rank(L̃) = rank(L̂_y) + rank(Θ̂_yx)`
//! 3. `rank(L̃) = rank(L̂_y + Θ̂_yx Θ̂_x⁻¹ Θ̂_xy)`
//!
//! and the column spaces of `L̂_y` and `Θ̂_yx` are transverse. Among qualifying
//! candidates the one closest to the reference wins.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};

use crate::error::{bail, Result};
use crate::linalg::{logspace, linspace, spectral_norm, SortedEigen, SortedSvd};
use crate::ops::{min_principal_angle, numerical_rank, BlockPrecision, SymMatrix};
use crate::population::{marginalize_precision, Dataset, FactorModelParams};
use crate::solver::{solve_composite_cov, SolverOptions, WarmStart};

/// Grid of `(λ, γ)` values, each axis strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    lambdas: Vec<f64>,
    gammas: Vec<f64>,
}

fn check_axis(v: &[f64], name: &str) -> Result<()> {
    if v.is_empty() {
        bail!(Validation, "{name} grid is empty");
    }
    if v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        bail!(Validation, "{name} grid values must be positive and finite");
    }
    if v.windows(2).any(|w| !(w[0] < w[1])) {
        bail!(Validation, "{name} grid must be strictly increasing");
    }
    Ok(())
}

impl SweepGrid {
    pub fn new(lambdas: Vec<f64>, gammas: Vec<f64>) -> Result<Self> {
        check_axis(&lambdas, "lambda")?;
        check_axis(&gammas, "gamma")?;
        Ok(Self { lambdas, gammas })
    }

    /// `count_l` log-spaced `λ` values and `count_g` evenly spaced `γ` values.
    pub fn spaced(l_min: f64, l_max: f64, count_l: usize, g_min: f64, g_max: f64, count_g: usize) -> Result<Self> {
        Self::new(logspace(l_min, l_max, count_l), linspace(g_min, g_max, count_g))
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn len(&self) -> usize {
        self.lambdas.len() * self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for SweepGrid {
    /// 25 `λ` values from 0.01 to 10 and 12 `γ` values from 0.5 to 4.
    fn default() -> Self {
        Self::spaced(1e-2, 1e1, 25, 0.5, 4.0, 12).expect("default grid is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditionFlags {
    pub rank_matches_d: bool,
    pub rank_additive: bool,
    pub rank_marginal: bool,
    pub transverse: bool,
}

impl ConditionFlags {
    pub fn all(&self) -> bool {
        self.rank_matches_d && self.rank_additive && self.rank_marginal && self.transverse
    }
}

#[derive(Debug, Clone)]
pub struct CandidateModel {
    pub estimate: BlockPrecision,
    pub lambda: f64,
    pub gamma: f64,
    pub lambda_index: usize,
    pub gamma_index: usize,
    /// `rank(Θ̂_yx)`
    pub d: usize,
    pub rank_l: usize,
    pub objective: f64,
    pub converged: bool,
    pub conditions: Option<ConditionFlags>,
    /// Present exactly when every condition holds.
    pub deviation: Option<f64>,
}

impl CandidateModel {
    pub fn qualifies(&self) -> bool {
        self.conditions.is_some_and(|c| c.all())
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub candidates: Vec<CandidateModel>,
    pub non_converged: usize,
}

/// Solves one `γ` column of the grid from the largest `λ` down, warm-starting
/// each solve from the previous one. Candidates come back in increasing `λ`.
pub fn sweep_path(
    sample_cov: &SymMatrix,
    p: usize,
    gamma: f64,
    gamma_index: usize,
    lambdas: &[f64],
    base: &SolverOptions,
) -> Result<Vec<CandidateModel>> {
    let mut warm: Option<WarmStart> = None;
    let mut out = Vec::with_capacity(lambdas.len());
    for (li, &lambda) in lambdas.iter().enumerate().rev() {
        let opts = SolverOptions { lambda, gamma, ..*base };
        let r = solve_composite_cov(sample_cov, p, &opts, warm.as_ref())?;
        warm = Some(r.warm_start.clone());
        out.push(CandidateModel {
            lambda,
            gamma,
            lambda_index: li,
            gamma_index,
            d: r.rank_theta_yx,
            rank_l: r.rank_l_y,
            objective: r.objective,
            converged: r.converged,
            estimate: r.estimate,
            conditions: None,
            deviation: None,
        });
    }
    out.reverse();
    Ok(out)
}

/// Every grid point, ordered by `γ` then `λ`.
pub fn sweep_grid(data: &Dataset, grid: &SweepGrid, base: &SolverOptions) -> Result<SweepOutcome> {
    let mut candidates = Vec::with_capacity(grid.len());
    for (gi, &gamma) in grid.gammas().iter().enumerate() {
        candidates.extend(sweep_path(&data.sample_cov, data.p, gamma, gi, grid.lambdas(), base)?);
    }
    Ok(finish_sweep(candidates))
}

/// Counts non-converged solves and logs them.
pub fn finish_sweep(candidates: Vec<CandidateModel>) -> SweepOutcome {
    let non_converged = candidates.iter().filter(|c| !c.converged).count();
    if non_converged > 0 {
        log::warn!("{non_converged} of {} grid solves did not converge", candidates.len());
    }
    SweepOutcome { candidates, non_converged }
}

fn top_eigvecs(m: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let e = SortedEigen::new(m);
    let n = m.nrows();
    e.vectors.columns(n - r, r).into_owned()
}

/// Evaluates the rank conditions and transversality (smallest principal
/// angle between the column spaces of `L̂_y` and `Θ̂_yx` above `angle_min`
/// degrees).
pub fn check_conditions(
    c: &CandidateModel,
    fm: &FactorModelParams,
    rank_tol: f64,
    angle_min: f64,
) -> Result<ConditionFlags> {
    let est = &c.estimate;
    if fm.p() != est.p {
        bail!(Dimension, "reference factor model has p = {}, estimate has p = {}", fm.p(), est.p);
    }
    let k = est.theta_yx();
    let rank_yx = numerical_rank(&k, rank_tol);
    let rank_l = numerical_rank(&est.l_y, rank_tol);
    let rank_ref = numerical_rank(&fm.l, rank_tol);
    let marginal = marginalize_precision(est)?;
    let rank_marg = numerical_rank(&marginal.l, rank_tol);

    let transverse = if rank_l == 0 || rank_yx == 0 {
        true
    } else {
        let ul = top_eigvecs(&est.l_y, rank_l);
        let uk = SortedSvd::new(&k).u.columns(0, rank_yx).into_owned();
        min_principal_angle(&ul, &uk)? > angle_min
    };
    Ok(ConditionFlags {
        rank_matches_d: rank_yx == c.d,
        rank_additive: rank_ref == rank_l + rank_yx,
        rank_marginal: rank_ref == rank_marg,
        transverse,
    })
}

/// `max{‖D̃ − D̂‖₂/‖D̃‖₂, ‖L̃ − (L̂_y + Θ̂_yx Θ̂_x⁻¹ Θ̂_xy)‖₂/‖L̃‖₂}`
pub fn deviation_metric(c: &CandidateModel, fm: &FactorModelParams) -> Result<f64> {
    let d_norm = fm.d.amax();
    let l_norm = spectral_norm(&fm.l);
    if d_norm == 0.0 || l_norm == 0.0 {
        bail!(Validation, "reference factor model has a zero block");
    }
    let marginal = marginalize_precision(&c.estimate)?;
    let dd = (&fm.d - &marginal.d).amax() / d_norm;
    let dl = spectral_norm(&(&*fm.l - &*marginal.l)) / l_norm;
    Ok(dd.max(dl))
}

/// Fills in condition flags, and the deviation for qualifying candidates.
pub fn evaluate_candidates(
    candidates: &mut [CandidateModel],
    fm: &FactorModelParams,
    rank_tol: f64,
    angle_min: f64,
) -> Result<()> {
    for c in candidates.iter_mut() {
        let flags = check_conditions(c, fm, rank_tol, angle_min)?;
        c.conditions = Some(flags);
        c.deviation = if flags.all() { Some(deviation_metric(c, fm)?) } else { None };
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct InterpretationResult {
    pub d: usize,
    pub chosen: CandidateModel,
    /// Top `d` right singular vectors of `Θ̂_yx` (`q × d`).
    pub basis: DMatrix<f64>,
    /// `‖P_V e_i‖²` for each covariate; sums to `d`.
    pub strengths: DVector<f64>,
}

fn better(a: &CandidateModel, b: &CandidateModel) -> bool {
    let (da, db) = (a.deviation.unwrap_or(f64::INFINITY), b.deviation.unwrap_or(f64::INFINITY));
    da < db || (da == db && (a.lambda < b.lambda || (a.lambda == b.lambda && a.gamma < b.gamma)))
}

/// Qualifying candidate with the smallest deviation, ties broken by smaller
/// `λ` then smaller `γ`.
pub fn select_best<'a>(candidates: impl IntoIterator<Item = &'a CandidateModel>) -> Option<&'a CandidateModel> {
    let mut best: Option<&CandidateModel> = None;
    for c in candidates.into_iter().filter(|c| c.qualifies() && c.deviation.is_some()) {
        if best.is_none_or(|b| better(c, b)) {
            best = Some(c);
        }
    }
    best
}

pub fn interpretation_for(c: &CandidateModel) -> InterpretationResult {
    let k = c.estimate.theta_yx();
    let q = k.ncols();
    let d = c.d.min(q);
    let basis = SortedSvd::new(&k).v.columns(0, d).into_owned();
    let strengths = DVector::from_fn(q, |i, _| basis.row(i).norm_squared());
    InterpretationResult { d, chosen: c.clone(), basis, strengths }
}

/// One interpretation per dimension in `d_range` that has a qualifying candidate.
pub fn select_models(candidates: &[CandidateModel], d_range: RangeInclusive<usize>) -> BTreeMap<usize, InterpretationResult> {
    let mut out = BTreeMap::new();
    for d in d_range {
        if let Some(best) = select_best(candidates.iter().filter(|c| c.d == d)) {
            out.insert(d, interpretation_for(best));
        }
    }
    out
}
