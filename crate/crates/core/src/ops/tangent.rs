//! Tangent spaces to low-rank varieties and distances between them.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use nalgebra::{DMatrix, DVector};

use crate::error::{bail, Result};
use crate::linalg::{
    column_basis, is_exactly_symmetric, orthogonal_complement, rank_relative, SortedEigen, SortedSvd,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TangentKind {
    /// Tangent to symmetric rank-r matrices: `{U Xᵀ + X Uᵀ}`.
    Symmetric,
    /// Tangent to rectangular rank-r matrices: `{U Xᵀ + Y Vᵀ}`.
    Rectangular,
}

/// Tangent space at a rank-r matrix, described by orthonormal bases of its
/// column and row spaces. For the symmetric kind both bases coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentSpace {
    pub kind: TangentKind,
    pub col_basis: DMatrix<f64>,
    pub row_basis: DMatrix<f64>,
}

fn check_orthonormal(u: &DMatrix<f64>, what: &str) -> Result<()> {
    let r = u.ncols();
    let err = (u.transpose() * u - DMatrix::identity(r, r)).amax();
    if !(err <= 1e-8) {
        bail!(Validation, "{what} columns are not orthonormal (error {err:.3e})");
    }
    Ok(())
}

impl TangentSpace {
    pub fn symmetric(u: DMatrix<f64>) -> Result<Self> {
        check_orthonormal(&u, "column basis")?;
        Ok(Self { kind: TangentKind::Symmetric, row_basis: u.clone(), col_basis: u })
    }

    pub fn rectangular(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        check_orthonormal(&u, "column basis")?;
        check_orthonormal(&v, "row basis")?;
        if u.ncols() != v.ncols() {
            bail!(Dimension, "column rank {} differs from row rank {}", u.ncols(), v.ncols());
        }
        Ok(Self { kind: TangentKind::Rectangular, col_basis: u, row_basis: v })
    }

    pub fn rank(&self) -> usize {
        self.col_basis.ncols()
    }

    /// Shape of the ambient matrices.
    pub fn shape(&self) -> (usize, usize) {
        (self.col_basis.nrows(), self.row_basis.nrows())
    }

    /// Dimension of the tangent space as a real vector space.
    pub fn dim(&self) -> usize {
        let (p, q) = self.shape();
        let r = self.rank();
        match self.kind {
            TangentKind::Symmetric => r * (r + 1) / 2 + (p - r) * r,
            TangentKind::Rectangular => r * (p + q - r),
        }
    }

    /// `P_U M + M P_V − P_U M P_V`
    pub fn project(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let u = &self.col_basis;
        let v = &self.row_basis;
        let um = u * (u.transpose() * m);
        let mv = (m * v) * v.transpose();
        let umv = u * ((u.transpose() * m * v) * v.transpose());
        um + mv - umv
    }

    pub fn project_perp(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m - self.project(m)
    }

    /// Orthonormal coordinates for the tangent space.
    pub fn basis(&self) -> TangentBasis {
        TangentBasis::new(self)
    }
}

/// Build the tangent space at `n` using its leading rank-`r` structure.
///
/// Exactly symmetric inputs give the symmetric kind, using eigenvectors of the
/// `r` largest-magnitude eigenvalues.
pub fn tangent_of(n: &DMatrix<f64>, r: usize) -> Result<TangentSpace> {
    let kind = if is_exactly_symmetric(n) { TangentKind::Symmetric } else { TangentKind::Rectangular };
    tangent_of_kind(n, r, kind)
}

/// As [`tangent_of`] with the kind chosen by the caller.
pub fn tangent_of_kind(n: &DMatrix<f64>, r: usize, kind: TangentKind) -> Result<TangentSpace> {
    let (p, q) = n.shape();
    if r > p.min(q) {
        bail!(Rank, "rank {r} exceeds the dimensions {p}x{q}");
    }
    let numerical = rank_relative(n, 1e-10);
    if r > numerical {
        bail!(Rank, "requested rank {r} exceeds numerical rank {numerical}");
    }
    match kind {
        TangentKind::Symmetric => {
            if p != q {
                bail!(Dimension, "symmetric tangent space needs a square matrix");
            }
            let e = SortedEigen::new(&crate::linalg::symmetrize(n));
            let mut order: Vec<usize> = (0..p).collect();
            order.sort_by(|&a, &b| e.values[b].abs().total_cmp(&e.values[a].abs()));
            let mut u = DMatrix::zeros(p, r);
            for (j, &i) in order.iter().take(r).enumerate() {
                u.set_column(j, &e.vectors.column(i));
            }
            TangentSpace::symmetric(u)
        }
        TangentKind::Rectangular => {
            let svd = SortedSvd::new(n);
            TangentSpace::rectangular(svd.u.columns(0, r).into_owned(), svd.v.columns(0, r).into_owned())
        }
    }
}

/// Coordinate map from `ℝ^dim` onto a tangent space, isometric for the
/// Frobenius inner product.
///
/// Symmetric kind: `U A Uᵀ + U Bᵀ U⊥ᵀ + U⊥ B Uᵀ` with coordinates listing the
/// upper triangle of `A` (off-diagonals scaled by √2) followed by the entries
/// of `B` scaled by √2. Rectangular kind: `U A Vᵀ + U B V⊥ᵀ + U⊥ C Vᵀ`.
#[derive(Debug, Clone)]
pub struct TangentBasis {
    pub kind: TangentKind,
    pub u: DMatrix<f64>,
    pub u_perp: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub v_perp: DMatrix<f64>,
}

const SQRT2: f64 = core::f64::consts::SQRT_2;

impl TangentBasis {
    pub fn new(t: &TangentSpace) -> Self {
        let u = t.col_basis.clone();
        let u_perp = orthogonal_complement(&u);
        let (v, v_perp) = match t.kind {
            TangentKind::Symmetric => (u.clone(), u_perp.clone()),
            TangentKind::Rectangular => {
                let v = t.row_basis.clone();
                let vp = orthogonal_complement(&v);
                (v, vp)
            }
        };
        Self { kind: t.kind, u, u_perp, v, v_perp }
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn dim(&self) -> usize {
        let r = self.rank();
        let p = self.u.nrows();
        let q = self.v.nrows();
        match self.kind {
            TangentKind::Symmetric => r * (r + 1) / 2 + (p - r) * r,
            TangentKind::Rectangular => r * (p + q - r),
        }
    }

    /// For the symmetric kind, returns `(A, X)` with the element equal to
    /// `U A Uᵀ + U Xᵀ + X Uᵀ` and `X = U⊥ B`.
    pub fn symmetric_factors(&self, c: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let r = self.rank();
        let mut a = DMatrix::zeros(r, r);
        let mut idx = 0;
        for i in 0..r {
            for j in i..r {
                if i == j {
                    a[(i, i)] = c[idx];
                } else {
                    a[(i, j)] = c[idx] / SQRT2;
                    a[(j, i)] = c[idx] / SQRT2;
                }
                idx += 1;
            }
        }
        let pr = self.u_perp.ncols();
        let b = DMatrix::from_column_slice(pr, r, &c[idx..idx + pr * r]) / SQRT2;
        (a, &self.u_perp * b)
    }

    /// For the rectangular kind, returns `(X, Y)` with the element equal to
    /// `U Yᵀ + X Vᵀ`.
    pub fn rectangular_factors(&self, c: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let r = self.rank();
        let (pr, qr) = (self.u_perp.ncols(), self.v_perp.ncols());
        let a = DMatrix::from_column_slice(r, r, &c[..r * r]);
        let b = DMatrix::from_column_slice(r, qr, &c[r * r..r * r + r * qr]);
        let cc = DMatrix::from_column_slice(pr, r, &c[r * r + r * qr..r * r + r * qr + pr * r]);
        // U A Vᵀ + U B V⊥ᵀ = U (V Aᵀ + V⊥ Bᵀ)ᵀ
        let y = &self.v * a.transpose() + &self.v_perp * b.transpose();
        (&self.u_perp * cc, y)
    }

    pub fn embed(&self, c: &[f64]) -> DMatrix<f64> {
        match self.kind {
            TangentKind::Symmetric => {
                let (a, x) = self.symmetric_factors(c);
                let ux = &self.u * x.transpose();
                &self.u * a * self.u.transpose() + &ux + ux.transpose()
            }
            TangentKind::Rectangular => {
                let (x, y) = self.rectangular_factors(c);
                &self.u * y.transpose() + x * self.v.transpose()
            }
        }
    }

    /// Coordinates of the orthogonal projection of `m` onto the tangent space.
    pub fn coords(&self, m: &DMatrix<f64>) -> DVector<f64> {
        let r = self.rank();
        let mut out = Vec::with_capacity(self.dim());
        match self.kind {
            TangentKind::Symmetric => {
                let a = self.u.transpose() * m * &self.u;
                for i in 0..r {
                    for j in i..r {
                        if i == j {
                            out.push(a[(i, i)]);
                        } else {
                            out.push((a[(i, j)] + a[(j, i)]) / SQRT2);
                        }
                    }
                }
                let b1 = self.u_perp.transpose() * m * &self.u;
                let b2 = self.u.transpose() * m * &self.u_perp;
                let b = (b1 + b2.transpose()) / SQRT2;
                out.extend(b.iter().copied());
            }
            TangentKind::Rectangular => {
                let mv = m * &self.v;
                out.extend((self.u.transpose() * &mv).iter().copied());
                out.extend((self.u.transpose() * m * &self.v_perp).iter().copied());
                out.extend((self.u_perp.transpose() * mv).iter().copied());
            }
        }
        DVector::from_vec(out)
    }

    /// Coordinates of the projection of `a bᵀ`, without forming the product.
    pub fn coords_rank_one(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let r = self.rank();
        let ua = self.u.transpose() * a;
        let mut out = Vec::with_capacity(self.dim());
        match self.kind {
            TangentKind::Symmetric => {
                let ub = self.u.transpose() * b;
                for i in 0..r {
                    for j in i..r {
                        if i == j {
                            out.push(ua[i] * ub[i]);
                        } else {
                            out.push((ua[i] * ub[j] + ua[j] * ub[i]) / SQRT2);
                        }
                    }
                }
                let pa = self.u_perp.transpose() * a;
                let pb = self.u_perp.transpose() * b;
                for j in 0..r {
                    for i in 0..pa.len() {
                        out.push((pa[i] * ub[j] + pb[i] * ua[j]) / SQRT2);
                    }
                }
            }
            TangentKind::Rectangular => {
                let vb = self.v.transpose() * b;
                let pb = self.v_perp.transpose() * b;
                let pa = self.u_perp.transpose() * a;
                for j in 0..r {
                    for i in 0..r {
                        out.push(ua[i] * vb[j]);
                    }
                }
                for j in 0..pb.len() {
                    for i in 0..r {
                        out.push(ua[i] * pb[j]);
                    }
                }
                for j in 0..r {
                    for i in 0..pa.len() {
                        out.push(pa[i] * vb[j]);
                    }
                }
            }
        }
        DVector::from_vec(out)
    }

    /// Dense orthonormal basis elements.
    pub fn elements(&self) -> Vec<DMatrix<f64>> {
        let n = self.dim();
        let mut e = alloc::vec![0.0; n];
        (0..n)
            .map(|i| {
                e[i] = 1.0;
                let m = self.embed(&e);
                e[i] = 0.0;
                m
            })
            .collect()
    }
}

// Factored low-rank matrix `left · rightᵀ`.
struct Factored {
    left: DMatrix<f64>,
    right: DMatrix<f64>,
}

impl Factored {
    /// Thin SVD through QR factors of each side.
    fn svd(&self) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
        let ql = self.left.clone().qr();
        let qr = self.right.clone().qr();
        let small = ql.r() * qr.r().transpose();
        let s = SortedSvd::new(&small);
        (ql.q() * s.u, s.s, qr.q() * s.v)
    }
}

fn hstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts[0].nrows();
    let cols: usize = parts.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for m in parts {
        out.view_mut((0, c), (rows, m.ncols())).copy_from(m);
        c += m.ncols();
    }
    out
}

// (P1 − P2)(X Yᵀ) in factored form.
fn projection_difference(t1: &TangentSpace, t2: &TangentSpace, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Factored {
    let mut lefts = Vec::new();
    let mut rights = Vec::new();
    for (t, sign) in [(t1, 1.0), (t2, -1.0)] {
        let u = &t.col_basis;
        let v = &t.row_basis;
        let xu = x.transpose() * u;
        let vy = v.transpose() * y;
        lefts.push(u * sign);
        rights.push(y * &xu);
        lefts.push(x * sign);
        rights.push(v * &vy);
        lefts.push(u * (-sign));
        rights.push(v * (vy * xu));
    }
    let l: Vec<&DMatrix<f64>> = lefts.iter().collect();
    let r: Vec<&DMatrix<f64>> = rights.iter().collect();
    Factored { left: hstack(&l), right: hstack(&r) }
}

/// Estimate of `max_{‖N‖₂ ≤ 1} ‖(P_{T1} − P_{T2})(N)‖₂`.
///
/// Alternates between the polar factor of `(P1 − P2)(a bᵀ)` and the top
/// singular pair of `(P1 − P2)(N)`, which increases the objective
/// monotonically. Iterates stay low rank, so each step costs `O((p+q) r²)`.
/// Symmetric tangent spaces restrict `N` to symmetric matrices.
pub fn rho_distance(t1: &TangentSpace, t2: &TangentSpace) -> Result<f64> {
    if t1.kind != t2.kind || t1.shape() != t2.shape() {
        bail!(Dimension, "tangent spaces have different kinds or ambient shapes");
    }
    let (p, q) = t1.shape();
    if t1.rank() == 0 && t2.rank() == 0 {
        return Ok(0.0);
    }
    let symmetric = t1.kind == TangentKind::Symmetric;
    let mut rng = rng::seeded(0x7a6e_5eed);

    let mut starts: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
    // Direction in the first column space furthest from the second.
    let (c1, c2) = if t1.rank() > 0 { (t1, t2) } else { (t2, t1) };
    let u0 = c1.col_basis.column(0).into_owned();
    let resid = &u0 - &c2.col_basis * (c2.col_basis.transpose() * &u0);
    let a0 = if resid.norm() > 1e-12 { resid.normalize() } else { u0 };
    let b0 = if symmetric { a0.clone() } else { c1.row_basis.column(0).into_owned() };
    starts.push((a0, b0));
    for _ in 0..4 {
        let a = rng::unit_vector(&mut rng, p);
        let b = if symmetric { a.clone() } else { rng::unit_vector(&mut rng, q) };
        starts.push((a, b));
    }

    // One ascent step from the rank-one pair (a, b): returns the objective
    // and the next pair.
    let step = |a: &DVector<f64>, b: &DVector<f64>| -> Option<(f64, DVector<f64>, DVector<f64>)> {
        let g = projection_difference(t1, t2, &DMatrix::from_column_slice(p, 1, a.as_slice()), &DMatrix::from_column_slice(q, 1, b.as_slice()));
        let (gu, gs, gv) = g.svd();
        let top = gs.iter().copied().fold(0.0, f64::max);
        if top <= 1e-14 {
            return None;
        }
        let keep: Vec<usize> = (0..gs.len()).filter(|&j| gs[j] > 1e-10 * top).collect();
        let h = projection_difference(t1, t2, &gu.select_columns(keep.iter()), &gv.select_columns(keep.iter()));
        let (hu, hs, hv) = h.svd();
        Some((hs[0], hu.column(0).into_owned(), hv.column(0).into_owned()))
    };
    let ascend = |mut a: DVector<f64>, mut b: DVector<f64>, iters: usize| -> (f64, DVector<f64>, DVector<f64>) {
        let mut value = 0.0;
        for _ in 0..iters {
            let Some((v, na, nb)) = step(&a, &b) else { break };
            let done = (v - value).abs() <= 1e-14 * v.max(1.0);
            value = value.max(v);
            a = na;
            b = nb;
            if done {
                break;
            }
        }
        (value, a, b)
    };

    // Screen every start briefly, then refine the most promising one.
    let mut lead: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    for (a, b) in starts {
        let cand = ascend(a, b, 100);
        if lead.as_ref().is_none_or(|l| cand.0 > l.0) {
            lead = Some(cand);
        }
    }
    Ok(match lead {
        Some((v, a, b)) => v.max(ascend(a, b, 5000).0),
        None => 0.0,
    })
}

/// `max_i ‖P_U e_i‖²` for a matrix `U` with orthonormal columns.
pub fn coherence(basis: &DMatrix<f64>) -> Result<f64> {
    check_orthonormal(basis, "coherence basis")?;
    Ok((0..basis.nrows()).map(|i| basis.row(i).norm_squared()).fold(0.0, f64::max))
}

/// Smallest principal angle in degrees between the column spaces of two
/// matrices. Empty spaces are at 90°.
pub fn min_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        bail!(Dimension, "ambient dimensions {} and {} differ", a.nrows(), b.nrows());
    }
    let qa = column_basis(a, 1e-10);
    let qb = column_basis(b, 1e-10);
    if qa.ncols() == 0 || qb.ncols() == 0 {
        return Ok(90.0);
    }
    let s = SortedSvd::new(&(qa.transpose() * qb)).s[0].clamp(0.0, 1.0);
    Ok(s.acos().to_degrees())
}

/// Largest principal angle in degrees between two tangent spaces regarded
/// as subspaces of the ambient matrix space with the Frobenius inner product.
pub fn tangent_angle(t1: &TangentSpace, t2: &TangentSpace) -> Result<f64> {
    if t1.kind != t2.kind || t1.shape() != t2.shape() {
        bail!(Dimension, "tangent spaces have different kinds or ambient shapes");
    }
    if t1.dim() != t2.dim() {
        return Ok(90.0);
    }
    if t1.dim() == 0 {
        return Ok(0.0);
    }
    let b1 = t1.basis();
    // Coordinates of each basis element of T2 in the basis of T1.
    let cols: Vec<DVector<f64>> = t2.basis().elements().iter().map(|m| b1.coords(m)).collect();
    let gram = DMatrix::from_columns(&cols);
    let smin = SortedSvd::new(&gram).s.iter().copied().fold(f64::INFINITY, f64::min).clamp(0.0, 1.0);
    Ok(smin.acos().to_degrees())
}
