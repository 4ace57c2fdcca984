//! Dense linear-algebra helpers shared by every module.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{bail, Result};

/// Eigendecomposition of a symmetric matrix with eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SortedEigen {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        if n == 0 {
            return Self { values: DVector::zeros(0), vectors: DMatrix::zeros(0, 0) };
        }
        let eig = SymmetricEigen::new(m.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (j, &i) in order.iter().enumerate() {
            vectors.set_column(j, &eig.eigenvectors.column(i));
        }
        Self { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Rebuilds `V f(Λ) Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = f(self.values[j]);
            scaled.column_mut(j).scale_mut(s);
        }
        symmetrize(&(scaled * self.vectors.transpose()))
    }
}

/// Thin SVD with singular values in descending order.
#[derive(Debug, Clone)]
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SortedSvd {
    /// One-sided Jacobi. The bidiagonal SVD in nalgebra 0.35 can return
    /// inaccurate factors for rank-deficient inputs.
    pub fn new(m: &DMatrix<f64>) -> Self {
        let (r, c) = m.shape();
        if r.min(c) == 0 {
            return Self { u: DMatrix::zeros(r, 0), s: DVector::zeros(0), v: DMatrix::zeros(c, 0) };
        }
        if r < c {
            let t = Self::new(&m.transpose());
            return Self { u: t.v, s: t.s, v: t.u };
        }
        let (a, v) = jacobi_columns(m.clone());
        let norms: Vec<f64> = (0..c).map(|j| a.column(j).norm()).collect();
        let mut order: Vec<usize> = (0..c).collect();
        order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
        let mut u = DMatrix::zeros(r, c);
        let mut vs = DMatrix::zeros(c, c);
        let mut s = DVector::zeros(c);
        let mut filled = 0;
        for (k, &j) in order.iter().enumerate() {
            s[k] = norms[j];
            vs.set_column(k, &v.column(j));
            if norms[j] > f64::MIN_POSITIVE {
                u.set_column(k, &(a.column(j) / norms[j]));
                filled = k + 1;
            }
        }
        complete_orthonormal(&mut u, filled);
        Self { u, s, v: vs }
    }
}

// Rotates column pairs of `a` (rows ≥ cols) until they are mutually
// orthogonal; returns the rotated columns and the accumulated rotation.
fn jacobi_columns(mut a: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (rows, n) = a.shape();
    let mut v = DMatrix::identity(n, n);
    let tol = f64::EPSILON * rows as f64;
    for _ in 0..80 {
        let mut rotated = false;
        for i in 0..n.saturating_sub(1) {
            for j in i + 1..n {
                let (ci, cj) = (a.column(i), a.column(j));
                let alpha = ci.norm_squared();
                let beta = cj.norm_squared();
                let gamma = ci.dot(&cj);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for mat in [&mut a, &mut v] {
                    for k in 0..mat.nrows() {
                        let (x, y) = (mat[(k, i)], mat[(k, j)]);
                        mat[(k, i)] = cs * x - sn * y;
                        mat[(k, j)] = sn * x + cs * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (a, v)
}

// Fills columns `from..` of `u` with unit vectors orthogonal to all earlier ones.
fn complete_orthonormal(u: &mut DMatrix<f64>, from: usize) {
    let (rows, cols) = u.shape();
    let mut next = from;
    let mut e = 0;
    while next < cols && e < rows {
        let mut cand = DVector::zeros(rows);
        cand[e] = 1.0;
        e += 1;
        for _ in 0..2 {
            for j in 0..next {
                let proj = u.column(j).dot(&cand);
                cand.axpy(-proj, &u.column(j), 1.0);
            }
        }
        let n = cand.norm();
        if n > 1e-8 {
            u.set_column(next, &(cand / n));
            next += 1;
        }
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_exactly_symmetric(m: &DMatrix<f64>) -> bool {
    m.is_square() && (0..m.nrows()).all(|i| (0..i).all(|j| m[(i, j)] == m[(j, i)]))
}

/// Largest singular value. Uses the symmetric eigensolver when possible.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return 0.0;
    }
    if r == 1 || c == 1 {
        return m.norm();
    }
    if is_exactly_symmetric(m) {
        let e = SortedEigen::new(m);
        return e.max().abs().max(e.min().abs());
    }
    // Work with the smaller Gram matrix when the shape is lopsided.
    if r >= 4 * c || c >= 4 * r {
        let g = if r > c { m.transpose() * m } else { m * m.transpose() };
        let top = SortedEigen::new(&symmetrize(&g)).max().max(0.0);
        return top.sqrt();
    }
    SortedSvd::new(m).s[0]
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(0);
    }
    SortedSvd::new(m).s
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn rank_relative(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    let top = s.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * top).count()
}

pub fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

pub fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if m.nrows() == 0 {
        return Cholesky::new(m.clone());
    }
    Cholesky::new(m.clone())
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite()) && cholesky(m).is_some()
}

pub fn logdet_pd(m: &DMatrix<f64>) -> Result<f64> {
    match cholesky(m) {
        Some(ch) => Ok(2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()),
        None => bail!(NotPositiveDefinite, "log-determinant of an indefinite matrix"),
    }
}

pub fn inverse_pd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match cholesky(m) {
        Some(ch) => Ok(symmetrize(&ch.inverse())),
        None => bail!(NotPositiveDefinite, "inverse of an indefinite matrix"),
    }
}

/// Orthonormal basis for the column space, keeping directions whose singular
/// value exceeds `rel_tol` times the largest.
pub fn column_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = SortedSvd::new(m);
    let top = svd.s.iter().copied().fold(0.0, f64::max);
    let r = if top == 0.0 { 0 } else { svd.s.iter().filter(|&&x| x > rel_tol * top).count() };
    svd.u.columns(0, r).into_owned()
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// orthonormal columns of `u`.
pub fn orthogonal_complement(u: &DMatrix<f64>) -> DMatrix<f64> {
    let p = u.nrows();
    let r = u.ncols();
    if r == 0 {
        return DMatrix::identity(p, p);
    }
    let proj = DMatrix::identity(p, p) - u * u.transpose();
    let e = SortedEigen::new(&symmetrize(&proj));
    // Eigenvalues are 0 (r times) then 1 (p - r times).
    e.vectors.columns(r, p - r).into_owned()
}

pub fn block(m: &DMatrix<f64>, r0: usize, c0: usize, nr: usize, nc: usize) -> DMatrix<f64> {
    m.view((r0, c0), (nr, nc)).into_owned()
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Condition number of a symmetric positive-definite matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let e = SortedEigen::new(m);
    e.max() / e.min()
}

/// `n` points evenly spaced on a log scale from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
        }
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Polar factor of a matrix restricted to its numerical range: `U Vᵀ`
/// over the singular triplets above `tol`.
pub fn partial_isometry(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let svd = SortedSvd::new(m);
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for j in 0..svd.s.len() {
        if svd.s[j] > tol {
            out += svd.u.column(j) * svd.v.column(j).transpose();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use nalgebra::dmatrix;

    #[test]
    fn eigen_sorted_ascending() {
        let m = dmatrix![3.0, 1.0; 1.0, 3.0];
        let e = SortedEigen::new(&m);
        assert!((e.values[0] - 2.0).abs() < 1e-12);
        assert!((e.values[1] - 4.0).abs() < 1e-12);
        assert!((e.map(|x| x) - m).norm() < 1e-12);
    }

    fn assert_valid_svd(m: &DMatrix<f64>) {
        let svd = SortedSvd::new(m);
        let k = m.nrows().min(m.ncols());
        let rebuilt = &svd.u * DMatrix::from_diagonal(&svd.s) * svd.v.transpose();
        assert!((rebuilt - m).norm() <= 1e-12 * m.norm().max(1.0));
        assert!((svd.u.transpose() * &svd.u - DMatrix::identity(k, k)).norm() < 1e-12);
        assert!((svd.v.transpose() * &svd.v - DMatrix::identity(k, k)).norm() < 1e-12);
        assert!(svd.s.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_of_rank_deficient_symmetric_matrix() {
        // Input on which the bidiagonal SVD of nalgebra 0.35 loses accuracy.
        let m = DMatrix::from_column_slice(7, 7, &vec![-0.04304108053602955, -0.018827025779729344, -0.05544861941261266, -0.03014713745190598, 0.004422536457519007, -0.0587234728674862, -0.010538078289987601, -0.01882702577972937, 0.014140058057578517, -0.05299663118263717, -0.014391328139298939, 0.03894256443403673, -0.03518839250807335, -0.03909345188324291, -0.05544861941261266, -0.05299663118263715, -0.034511963943521795, -0.03729063937580259, -0.04184129536638937, -0.06344655110242932, 0.030720386825574958, -0.030147137451906, -0.014391328139298887, -0.03729063937580262, -0.021051044787509198, 0.001105680068943017, -0.04062008054839452, -0.005525036354321348, 0.004422536457518901, 0.038942564434036785, -0.0418412953663894, 0.0011056800689430088, 0.060755567723556676, -0.009681336736405885, -0.055952296809751834, -0.05872347286748619, -0.035188392508073325, -0.06344655110242933, -0.040620080548394534, -0.009681336736405841, -0.0760850908489683, 0.0002656685034299342, -0.010538078289987627, -0.03909345188324291, 0.030720386825574972, -0.005525036354321368, -0.05595229680975182, 0.0002656685034299125, 0.050564844646144615]);
        assert_valid_svd(&m);
        let eig = SortedEigen::new(&m);
        assert!((SortedSvd::new(&m).s[0] - eig.min().abs().max(eig.max())).abs() < 1e-14);
    }

    #[test]
    fn svd_factors_on_random_low_rank_shapes() {
        let mut rng = crate::rng::seeded(4);
        for (r, c, k) in [(9, 4, 2), (4, 9, 1), (6, 6, 6), (5, 5, 0), (1, 3, 1), (12, 12, 3)] {
            let m = crate::rng::gaussian_matrix(&mut rng, r, k) * crate::rng::gaussian_matrix(&mut rng, k, c);
            assert_valid_svd(&m);
        }
    }

    #[test]
    fn spectral_norm_paths_agree() {
        let tall = DMatrix::from_fn(12, 2, |i, j| ((i * 3 + j * 7) % 5) as f64 - 2.0);
        let direct = tall.singular_values().max();
        assert!((spectral_norm(&tall) - direct).abs() < 1e-10);
        let sym = dmatrix![1.0, -2.0; -2.0, 0.5];
        assert!((spectral_norm(&sym) - sym.singular_values().max()).abs() < 1e-12);
    }

    #[test]
    fn logdet_matches_eigenvalues() {
        let m = dmatrix![2.0, 0.5; 0.5, 1.0];
        let expected = (2.0f64 * 1.0 - 0.25).ln();
        assert!((logdet_pd(&m).unwrap() - expected).abs() < 1e-12);
        assert!(logdet_pd(&dmatrix![1.0, 2.0; 2.0, 1.0]).is_err());
    }

    #[test]
    fn complement_is_orthonormal() {
        let u = column_basis(&dmatrix![1.0; 1.0; 0.0], 1e-12);
        let c = orthogonal_complement(&u);
        assert_eq!(c.ncols(), 2);
        assert!((c.transpose() * &c - DMatrix::identity(2, 2)).norm() < 1e-12);
        assert!((u.transpose() * &c).norm() < 1e-12);
    }

    #[test]
    fn spacing_helpers() {
        let l = logspace(0.01, 10.0, 25);
        assert_eq!(l.len(), 25);
        assert!((l[0] - 0.01).abs() < 1e-15 && (l[24] - 10.0).abs() < 1e-12);
        assert_eq!(linspace(0.5, 4.0, 12)[11], 4.0);
    }
}
