//! ADMM for the composite program
//!
//! ```text
//! min −log det Θ + tr(Θ S) + λ (γ ‖Θ_yx‖⋆ + tr L_y)
//! s.t. Θ = F(D_y, L_y, Θ_yx, Θ_x) ≻ 0,  L_y ⪰ 0,  D_y diagonal
//! ```
//!
//! The splitting keeps a free copy `Z` of `Θ` for the log-likelihood and the
//! structured variables `W = (D, L, K, O)` for the penalties, linked by
//! `Z = F(W)`. Each `W` update is exact in `K` and `O` and makes one
//! Gauss–Seidel pass over `(D, L)`.

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::linalg::{block, inverse_pd, is_positive_definite, SortedEigen, SortedSvd};
use crate::ops::{numerical_rank, BlockPrecision, SymMatrix, DEFAULT_RANK_TOL};
use crate::population::{Dataset, FactorModelParams};
use crate::solver::prox::{neg_log_likelihood, prox_logdet, prox_nuclear, prox_trace_psd};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub lambda: f64,
    pub gamma: f64,
    pub rho: f64,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub rank_tol: f64,
    /// Rescale `ρ` when one residual dominates the other.
    pub adapt_rho: bool,
}

impl SolverOptions {
    pub fn new(lambda: f64, gamma: f64) -> Self {
        Self {
            lambda,
            gamma,
            rho: 1.0,
            max_iters: 5000,
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            rank_tol: DEFAULT_RANK_TOL,
            adapt_rho: true,
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol_primal = tol;
        self.tol_dual = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            bail!(Validation, "lambda must be non-negative, got {}", self.lambda);
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            bail!(Validation, "gamma must be positive, got {}", self.gamma);
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            bail!(Validation, "rho must be positive, got {}", self.rho);
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            bail!(Validation, "tolerances must be positive");
        }
        if self.max_iters == 0 {
            bail!(Validation, "max_iters must be at least 1");
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            bail!(Validation, "rank tolerance must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Solver state that can seed a nearby problem.
#[derive(Debug, Clone)]
pub struct WarmStart {
    z: DMatrix<f64>,
    d: DVector<f64>,
    l: DMatrix<f64>,
    k: DMatrix<f64>,
    o: DMatrix<f64>,
    u: DMatrix<f64>,
    rho: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub estimate: BlockPrecision,
    pub objective: f64,
    pub iterations: usize,
    /// `‖Z − F(W)‖_F / max(1, ‖Z‖_F, ‖F(W)‖_F)`
    pub primal_residual: f64,
    /// Change in `F(W)` scaled by `ρ`, relative to `max(1, ‖ρU‖_F)`.
    pub dual_residual: f64,
    pub converged: bool,
    pub rank_l_y: usize,
    pub rank_theta_yx: usize,
    pub warm_start: WarmStart,
}

fn assemble(d: &DVector<f64>, l: &DMatrix<f64>, k: &DMatrix<f64>, o: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = k.shape();
    let mut m = DMatrix::zeros(p + q, p + q);
    let mut y = -l;
    for i in 0..p {
        y[(i, i)] += d[i];
    }
    m.view_mut((0, 0), (p, p)).copy_from(&y);
    m.view_mut((0, p), (p, q)).copy_from(k);
    m.view_mut((p, 0), (q, p)).copy_from(&k.transpose());
    m.view_mut((p, p), (q, q)).copy_from(o);
    m
}

fn nuclear_norm(k: &DMatrix<f64>) -> f64 {
    if k.nrows() == 0 || k.ncols() == 0 {
        return 0.0;
    }
    SortedSvd::new(k).s.sum()
}

/// Composite objective at a structured point.
pub fn composite_objective(est: &BlockPrecision, sample_cov: &DMatrix<f64>, lambda: f64, gamma: f64) -> Result<f64> {
    Ok(neg_log_likelihood(&est.theta, sample_cov)?
        + lambda * (gamma * nuclear_norm(&est.theta_yx()) + est.l_y.trace()))
}

fn initial_state(s: &DMatrix<f64>, p: usize, rho: f64) -> Result<WarmStart> {
    let m = s.nrows();
    let q = m - p;
    let shift = 1e-3 * (s.trace() / m as f64).max(1e-12);
    let theta0 = inverse_pd(&(s + DMatrix::identity(m, m) * shift))?;
    let d = DVector::from_fn(p, |i, _| theta0[(i, i)]);
    Ok(WarmStart {
        z: theta0.clone(),
        d,
        l: DMatrix::zeros(p, p),
        k: block(&theta0, 0, p, p, q),
        o: block(&theta0, p, p, q, q),
        u: DMatrix::zeros(m, m),
        rho,
    })
}

/// Solves the composite program on a sample covariance split as `p + q`.
pub fn solve_composite_cov(
    sample_cov: &SymMatrix,
    p: usize,
    opts: &SolverOptions,
    warm: Option<&WarmStart>,
) -> Result<SolveReport> {
    opts.validate()?;
    let s: &DMatrix<f64> = sample_cov;
    let m = s.nrows();
    if p == 0 || p > m {
        bail!(Dimension, "p = {p} is invalid for a {m}x{m} covariance");
    }
    if s.iter().any(|x| !x.is_finite()) {
        bail!(Validation, "sample covariance contains non-finite values");
    }
    let q = m - p;
    let mut st = match warm {
        Some(w) if w.z.nrows() == m && w.d.len() == p => w.clone(),
        _ => initial_state(s, p, opts.rho)?,
    };
    let (lambda, gamma) = (opts.lambda, opts.gamma);
    let mut fw = assemble(&st.d, &st.l, &st.k, &st.o);
    let mut rho = st.rho;
    let (mut rp, mut rd) = (f64::INFINITY, f64::INFINITY);
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=opts.max_iters {
        iterations = it;
        st.z = prox_logdet(&(&fw - &st.u), s, rho)?.into_matrix();
        let a = &st.z + &st.u;
        let a_y = block(&a, 0, 0, p, p);
        if q > 0 {
            st.k = prox_nuclear(&block(&a, 0, p, p, q), lambda * gamma / (2.0 * rho));
            let ax = block(&a, p, p, q, q);
            st.o = (&ax + ax.transpose()) * 0.5;
        }
        let d_new = DVector::from_fn(p, |i, _| a_y[(i, i)] + st.l[(i, i)]);
        let mut target = -a_y;
        for i in 0..p {
            target[(i, i)] += d_new[i];
        }
        let l_new = prox_trace_psd(&target, lambda / rho).into_matrix();
        let diag_change: f64 = (0..p).map(|i| (l_new[(i, i)] - st.l[(i, i)]).powi(2)).sum();
        st.d = d_new;
        st.l = l_new;

        let fw_new = assemble(&st.d, &st.l, &st.k, &st.o);
        let r = &st.z - &fw_new;
        st.u += &r;
        let dual_abs = rho * ((&fw_new - &fw).norm_squared() + diag_change).sqrt();
        rp = r.norm() / 1f64.max(st.z.norm()).max(fw_new.norm());
        rd = dual_abs / 1f64.max(rho * st.u.norm());
        fw = fw_new;

        if rp <= opts.tol_primal && rd <= opts.tol_dual {
            converged = true;
            break;
        }
        if opts.adapt_rho && it % 10 == 0 {
            if rp > 10.0 * rd {
                rho *= 2.0;
                st.u /= 2.0;
            } else if rd > 10.0 * rp {
                rho /= 2.0;
                st.u *= 2.0;
            }
        }
    }
    st.rho = rho;

    if !is_positive_definite(&fw) {
        if converged {
            bail!(Numerical, "converged iterate is not positive definite");
        }
        // Lift the diagonal so that the reported estimate is a valid precision.
        let lift = -SortedEigen::new(&fw).min() + 1e-8;
        log::warn!("unconverged iterate lifted by {lift:.3e} to restore definiteness");
        st.d.add_scalar_mut(lift);
    }
    let l_sym = SymMatrix::symmetric_part(&st.l);
    let o_sym = SymMatrix::symmetric_part(&st.o);
    let estimate = BlockPrecision::from_parts(st.d.clone(), l_sym, st.k.clone(), o_sym)?;
    let objective = composite_objective(&estimate, s, lambda, gamma)?;
    let rank_l_y = numerical_rank(&estimate.l_y, opts.rank_tol);
    let rank_theta_yx = numerical_rank(&st.k, opts.rank_tol);
    if !converged {
        log::warn!("ADMM stopped after {iterations} iterations (primal {rp:.2e}, dual {rd:.2e})");
    }
    Ok(SolveReport {
        estimate,
        objective,
        iterations,
        primal_residual: rp,
        dual_residual: rd,
        converged,
        rank_l_y,
        rank_theta_yx,
        warm_start: st,
    })
}

pub fn solve_composite(data: &Dataset, opts: &SolverOptions) -> Result<SolveReport> {
    solve_composite_cov(&data.sample_cov, data.p, opts, None)
}

/// Factor-model program `min −ℓ(D − L) + λ̃ tr L` over the responses only.
/// Covariate columns of `data`, if any, are ignored.
pub fn solve_factor(data: &Dataset, lambda_tilde: f64, opts: &SolverOptions) -> Result<(FactorModelParams, SolveReport)> {
    let y = data.y_only();
    solve_factor_cov(&y.sample_cov, lambda_tilde, opts, None)
}

pub fn solve_factor_cov(
    sample_cov: &SymMatrix,
    lambda_tilde: f64,
    opts: &SolverOptions,
    warm: Option<&WarmStart>,
) -> Result<(FactorModelParams, SolveReport)> {
    let o = SolverOptions { lambda: lambda_tilde, gamma: 1.0, ..*opts };
    let report = solve_composite_cov(sample_cov, sample_cov.dim(), &o, warm)?;
    let fm = FactorModelParams { d: report.estimate.d_y.clone(), l: report.estimate.l_y.clone() };
    Ok((fm, report))
}
