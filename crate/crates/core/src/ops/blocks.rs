//! Block-structured matrices and the two linear maps that assemble them.

use core::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{bail, Result};
use crate::linalg::{block, is_positive_definite, symmetrize, SortedEigen};

/// A square matrix that is exactly symmetric.
///
/// Construction averages the matrix with its transpose, so downstream code can
/// rely on `m[(i, j)] == m[(j, i)]` bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Accepts matrices that are symmetric up to rounding and symmetrizes them.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            bail!(Dimension, "expected a square matrix, got {}x{}", m.nrows(), m.ncols());
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if !(asym <= 1e-9 * scale) {
            bail!(Validation, "matrix is not symmetric (max asymmetry {asym:.3e})");
        }
        Ok(Self(symmetrize(&m)))
    }

    /// Symmetric part of any square matrix.
    pub fn symmetric_part(m: &DMatrix<f64>) -> Self {
        assert!(m.is_square(), "symmetric_part needs a square matrix");
        Self(symmetrize(m))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &DVector<f64>) -> Self {
        Self(DMatrix::from_diagonal(d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.0[(i, j)] == 0.0))
    }

    pub fn is_positive_definite(&self) -> bool {
        is_positive_definite(&self.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return f64::INFINITY;
        }
        SortedEigen::new(&self.0).min()
    }
}

impl Deref for SymMatrix {
    type Target = DMatrix<f64>;
    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Element of `Sᵖ × Sᵖ × ℝ^{p×q} × S^q`.
///
/// The first slot holds the diagonal part of a precision when the tuple is a
/// model parameter, but adjoint images may fill it with a full symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTuple {
    pub d: SymMatrix,
    pub l: SymMatrix,
    pub k: DMatrix<f64>,
    pub o: SymMatrix,
}

impl BlockTuple {
    pub fn new(d: SymMatrix, l: SymMatrix, k: DMatrix<f64>, o: SymMatrix) -> Result<Self> {
        let p = d.dim();
        if l.dim() != p || k.nrows() != p || k.ncols() != o.dim() {
            bail!(
                Dimension,
                "block tuple shapes disagree: d {p}, l {}, k {}x{}, o {}",
                l.dim(),
                k.nrows(),
                k.ncols(),
                o.dim()
            );
        }
        Ok(Self { d, l, k, o })
    }

    pub fn zeros(p: usize, q: usize) -> Self {
        Self { d: SymMatrix::zeros(p), l: SymMatrix::zeros(p), k: DMatrix::zeros(p, q), o: SymMatrix::zeros(q) }
    }

    pub fn p(&self) -> usize {
        self.d.dim()
    }

    pub fn q(&self) -> usize {
        self.o.dim()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            d: SymMatrix(&*self.d * s),
            l: SymMatrix(&*self.l * s),
            k: &self.k * s,
            o: SymMatrix(&*self.o * s),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            d: SymMatrix(&*self.d + &*other.d),
            l: SymMatrix(&*self.l + &*other.l),
            k: &self.k + &other.k,
            o: SymMatrix(&*self.o + &*other.o),
        }
    }

    /// Pairing under which the F map and its adjoint satisfy
    /// `⟨F(t), M⟩ = pairing(t, F†(M))`.
    ///
    /// `⟨d,d'⟩ − ⟨l,l'⟩ + 2⟨k,k'⟩ + ⟨o,o'⟩`
    pub fn pairing_f(&self, other: &Self) -> f64 {
        self.d.dot(&other.d) - self.l.dot(&other.l) + 2.0 * self.k.dot(&other.k) + self.o.dot(&other.o)
    }

    /// Pairing for the G map: `⟨l,l'⟩ + 2⟨k,k'⟩`.
    pub fn pairing_g(&self, other: &Self) -> f64 {
        self.l.dot(&other.l) + 2.0 * self.k.dot(&other.k)
    }
}

/// Which assembly map to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockMode {
    /// `F(D, L, K, O) = [[D − L, K], [Kᵀ, O]]`
    F,
    /// `G(L, K) = [[L, K], [Kᵀ, 0]]`
    G,
}

fn assemble(top_left: &DMatrix<f64>, k: &DMatrix<f64>, bottom_right: &DMatrix<f64>) -> SymMatrix {
    let (p, q) = k.shape();
    let mut m = DMatrix::zeros(p + q, p + q);
    m.view_mut((0, 0), (p, p)).copy_from(top_left);
    m.view_mut((0, p), (p, q)).copy_from(k);
    m.view_mut((p, 0), (q, p)).copy_from(&k.transpose());
    m.view_mut((p, p), (q, q)).copy_from(bottom_right);
    SymMatrix(symmetrize(&m))
}

pub fn block_assemble(t: &BlockTuple, mode: BlockMode) -> SymMatrix {
    match mode {
        BlockMode::F => assemble(&(&*t.d - &*t.l), &t.k, &t.o),
        BlockMode::G => assemble(&t.l, &t.k, &DMatrix::zeros(t.q(), t.q())),
    }
}

/// Splits a `(p+q)`-square symmetric matrix into `(Q, K, O)`.
pub fn split_blocks(m: &DMatrix<f64>, p: usize) -> Result<(SymMatrix, DMatrix<f64>, SymMatrix)> {
    if !m.is_square() || m.nrows() < p {
        bail!(Dimension, "cannot split a {}x{} matrix at p = {p}", m.nrows(), m.ncols());
    }
    let q = m.nrows() - p;
    Ok((
        SymMatrix(symmetrize(&block(m, 0, 0, p, p))),
        block(m, 0, p, p, q),
        SymMatrix(symmetrize(&block(m, p, p, q, q))),
    ))
}

/// `F†(M) = (Q, Q, K, O)` and `G†(M) = (Q, K)`.
///
/// For `G` the returned tuple carries `Q` in both the `d` and `l` slots and a
/// zero `o`.
pub fn block_adjoint(m: &DMatrix<f64>, p: usize, mode: BlockMode) -> Result<BlockTuple> {
    let (qb, k, o) = split_blocks(m, p)?;
    Ok(match mode {
        BlockMode::F => BlockTuple { d: qb.clone(), l: qb, k, o },
        BlockMode::G => {
            let q = o.dim();
            BlockTuple { d: qb.clone(), l: qb, k, o: SymMatrix::zeros(q) }
        }
    })
}

/// A joint precision estimate with the y-block split as `diag(d_y) − l_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPrecision {
    pub theta: SymMatrix,
    pub d_y: DVector<f64>,
    pub l_y: SymMatrix,
    pub p: usize,
    pub q: usize,
}

impl BlockPrecision {
    /// Assembles `[[diag(d_y) − l_y, k], [kᵀ, o]]` and checks positivity.
    pub fn from_parts(d_y: DVector<f64>, l_y: SymMatrix, k: DMatrix<f64>, o: SymMatrix) -> Result<Self> {
        let p = d_y.len();
        let q = o.dim();
        if l_y.dim() != p || k.shape() != (p, q) {
            bail!(Dimension, "precision blocks disagree with p = {p}, q = {q}");
        }
        if p > 0 && l_y.min_eigenvalue() < -1e-8 {
            bail!(Validation, "low-rank block is not positive semidefinite");
        }
        let theta = assemble(&(DMatrix::from_diagonal(&d_y) - &*l_y), &k, &o);
        if !theta.is_positive_definite() {
            bail!(NotPositiveDefinite, "assembled precision");
        }
        Ok(Self { theta, d_y, l_y, p, q })
    }

    pub fn theta_y(&self) -> DMatrix<f64> {
        block(&self.theta, 0, 0, self.p, self.p)
    }

    pub fn theta_yx(&self) -> DMatrix<f64> {
        block(&self.theta, 0, self.p, self.p, self.q)
    }

    pub fn theta_x(&self) -> DMatrix<f64> {
        block(&self.theta, self.p, self.p, self.q, self.q)
    }

    pub fn to_tuple(&self) -> BlockTuple {
        BlockTuple {
            d: SymMatrix::from_diagonal(&self.d_y),
            l: self.l_y.clone(),
            k: self.theta_yx(),
            o: SymMatrix(self.theta_x()),
        }
    }
}
