use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::linalg::{logdet_pd, SortedEigen, SortedSvd};
use crate::ops::SymMatrix;

/// `−log det Θ + tr(Θ S)`
pub fn neg_log_likelihood(theta: &DMatrix<f64>, sample_cov: &DMatrix<f64>) -> Result<f64> {
    if theta.shape() != sample_cov.shape() {
        bail!(Dimension, "precision and covariance shapes differ");
    }
    Ok(-logdet_pd(theta)? + theta.dot(sample_cov))
}

/// `argmin_Z −log det Z + tr(Z S) + (ρ/2)‖Z − M‖²_F`.
///
/// With `ρM − S = Q diag(d) Qᵀ` the minimizer is `Q diag(z) Qᵀ` where
/// `z = (d + √(d² + 4ρ)) / 2ρ`.
pub fn prox_logdet(m: &DMatrix<f64>, sample_cov: &DMatrix<f64>, rho: f64) -> Result<SymMatrix> {
    if !(rho > 0.0) {
        bail!(Validation, "penalty parameter must be positive, got {rho}");
    }
    if m.shape() != sample_cov.shape() || !m.is_square() {
        bail!(Dimension, "prox_logdet shapes differ");
    }
    let e = SortedEigen::new(&(m * rho - sample_cov));
    Ok(SymMatrix::symmetric_part(&e.map(|d| {
        let root = (d * d + 4.0 * rho).sqrt();
        // Both forms are equal; the second avoids cancellation for negative d.
        if d >= 0.0 { (d + root) / (2.0 * rho) } else { 2.0 / (root - d) }
    })))
}

/// Singular value soft-thresholding.
pub fn prox_nuclear(k: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    if k.nrows() == 0 || k.ncols() == 0 {
        return k.clone();
    }
    let svd = SortedSvd::new(k);
    let mut out = DMatrix::zeros(k.nrows(), k.ncols());
    for j in 0..svd.s.len() {
        let s = svd.s[j] - t;
        if s > 0.0 {
            out += svd.u.column(j) * (svd.v.column(j).transpose() * s);
        }
    }
    out
}

/// `argmin_{L ⪰ 0} t·tr L + ½‖L − M‖²_F`: eigenvalues shifted by `−t` and
/// clamped at zero.
pub fn prox_trace_psd(m: &DMatrix<f64>, t: f64) -> SymMatrix {
    if m.nrows() == 0 {
        return SymMatrix::zeros(0);
    }
    SymMatrix::symmetric_part(&SortedEigen::new(m).map(|x| (x - t).max(0.0)))
}
