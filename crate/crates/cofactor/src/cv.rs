//! Held-out likelihood selection for the factor-model program.

use std::collections::BTreeMap;

use cofactor_core::population::{shuffled_indices, Dataset, FactorModelParams};
use cofactor_core::solver::{neg_log_likelihood, solve_factor_cov, SolverOptions, WarmStart};
use serde::Serialize;

use crate::error::{invalid, Result};

/// Held-out share of the rows: 100 of every 408.
pub const TEST_FRACTION: f64 = 100.0 / 408.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub step: f64,
    pub split_seed: u64,
    pub test_fraction: f64,
    pub solver: SolverOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            lambda_min: 0.04,
            lambda_max: 4.0,
            step: 0.004,
            split_seed: 0,
            test_fraction: TEST_FRACTION,
            solver: SolverOptions::new(0.0, 1.0),
        }
    }
}

impl CvOptions {
    /// `λ_min, λ_min + step, …` up to `λ_max`.
    pub fn lambdas(&self) -> Result<Vec<f64>> {
        if !(self.lambda_min > 0.0 && self.lambda_max >= self.lambda_min && self.step > 0.0) {
            invalid!("need 0 < lambda_min <= lambda_max and step > 0");
        }
        let count = ((self.lambda_max - self.lambda_min) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| self.lambda_min + i as f64 * self.step).collect())
    }
}

/// Disjoint train and test row indices covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn train_test_split(n: usize, test_fraction: f64, seed: u64) -> Result<Split> {
    if n < 2 {
        invalid!("need at least 2 rows to split, got {n}");
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        invalid!("test fraction must lie in (0, 1), got {test_fraction}");
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let idx = shuffled_indices(n, seed);
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(Split { train, test })
}

/// Mean Gaussian log-likelihood of the rows behind `sample_cov` under the
/// zero-mean model with precision `theta`.
pub fn mean_log_likelihood(theta: &nalgebra::DMatrix<f64>, sample_cov: &nalgebra::DMatrix<f64>) -> Option<f64> {
    let p = theta.nrows() as f64;
    let nll = neg_log_likelihood(theta, sample_cov).ok()?;
    Some(-0.5 * (nll + p * (2.0 * std::f64::consts::PI).ln()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CvPoint {
    pub lambda: f64,
    pub rank: usize,
    pub test_log_likelihood: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct CvResult {
    /// One entry per scored `λ̃`, in increasing order.
    pub points: Vec<CvPoint>,
    /// Best point for each rank seen.
    pub by_rank: BTreeMap<usize, CvPoint>,
    pub best: CvPoint,
    pub best_model: FactorModelParams,
    pub skipped: usize,
    pub split: Split,
}

fn better(a: &CvPoint, b: &CvPoint) -> bool {
    a.test_log_likelihood > b.test_log_likelihood || (a.test_log_likelihood == b.test_log_likelihood && a.lambda > b.lambda)
}

/// Fits the factor program on a training split along a `λ̃` path and scores
/// each fit on the held-out rows. Only the response columns are used.
pub fn cross_validate_factor(data: &Dataset, opts: &CvOptions) -> Result<CvResult> {
    let lambdas = opts.lambdas()?;
    let split = train_test_split(data.n(), opts.test_fraction, opts.split_seed)?;
    let y = data.y_only();
    let train = y.subset(&split.train)?;
    let test = y.subset(&split.test)?;

    let mut warm: Option<WarmStart> = None;
    let mut points = Vec::with_capacity(lambdas.len());
    let mut models = Vec::with_capacity(lambdas.len());
    let mut skipped = 0;
    for &lambda in lambdas.iter().rev() {
        let (fm, report) = match solve_factor_cov(&train.sample_cov, lambda, &opts.solver, warm.as_ref()) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("lambda {lambda}: fit failed ({e}); skipping");
                skipped += 1;
                continue;
            }
        };
        warm = Some(report.warm_start.clone());
        let Some(ll) = mean_log_likelihood(&fm.precision(), &test.sample_cov) else {
            log::warn!("lambda {lambda}: fitted precision is not positive definite; skipping");
            skipped += 1;
            continue;
        };
        points.push(CvPoint { lambda, rank: report.rank_l_y, test_log_likelihood: ll, converged: report.converged });
        models.push(fm);
    }
    points.reverse();
    models.reverse();
    if points.is_empty() {
        invalid!("no lambda produced a usable fit");
    }

    let mut by_rank: BTreeMap<usize, CvPoint> = BTreeMap::new();
    let mut best = 0;
    for (i, pt) in points.iter().enumerate() {
        by_rank.entry(pt.rank).and_modify(|b| if better(pt, b) { *b = *pt }).or_insert(*pt);
        if better(pt, &points[best]) {
            best = i;
        }
    }
    Ok(CvResult { best: points[best], best_model: models.swap_remove(best), by_rank, points, skipped, split })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_991_points() {
        let l = CvOptions::default().lambdas().unwrap();
        assert_eq!(l.len(), 991);
        assert!((l[990] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn split_sizes_follow_the_fraction() {
        let s = train_test_split(408, TEST_FRACTION, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (308, 100));
        assert!(train_test_split(1, 0.5, 0).is_err());
        let s = train_test_split(2, 0.01, 0).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (1, 1));
    }
}
