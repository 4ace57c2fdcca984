//! Estimates of `χ`, `Ξ` and `φ` in orthonormal coordinates.
//!
//! Elements of `H` are stored as coordinate vectors
//! `[diag (p) | T_y | T_yx | S^q]`, and elements of `H[2,3]` as `[T_y | T_yx]`.
//! The restricted operators become dense matrices in these coordinates.
//! Norms are evaluated from low-rank factors, so each optimizer step is cheap.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
#[allow(unused_imports)]
use num_traits::Float;

use super::{sample_family, FisherOperator, SubspaceFamily};
use crate::error::{bail, Result};
use crate::linalg::{symmetrize, SortedEigen, SortedSvd};
use crate::ops::{NormParams, TangentBasis};
use crate::population::PopulationModel;
use crate::rng;

const SQRT2: f64 = core::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    /// Random starts per quantity.
    pub restarts: usize,
    /// Subgradient steps per start.
    pub iterations: usize,
    pub seed: u64,
    /// Tikhonov term for the restricted inverse inside `φ`.
    pub ridge: f64,
    /// Largest `p + q` accepted.
    pub max_dim: usize,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self { restarts: 20, iterations: 150, seed: 0, ridge: 1e-12, max_dim: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherQuantities {
    /// Smallest gain found for `P_H F† I★ F P_H` under `Φ_γ` (an upper bound
    /// on the true minimum).
    pub chi: f64,
    /// Smallest gain found for `P_{H[2,3]} G† I★ G P_{H[2,3]}` under `Γ_γ`.
    pub xi: f64,
    /// Largest cross gain found (a lower bound on the true maximum). Infinite
    /// when the restricted operator is singular.
    pub varphi: f64,
    pub singular: bool,
}

struct Coordinates {
    p: usize,
    q: usize,
    gamma: f64,
    by: TangentBasis,
    byx: TangentBasis,
    ny: usize,
    nyx: usize,
    no: usize,
}

fn sym_coords(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(if i == j { m[(i, i)] } else { (m[(i, j)] + m[(j, i)]) / SQRT2 });
        }
    }
    out
}

fn sym_embed(c: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut idx = 0;
    for i in 0..n {
        for j in i..n {
            if i == j {
                m[(i, i)] = c[idx];
            } else {
                m[(i, j)] = c[idx] / SQRT2;
                m[(j, i)] = c[idx] / SQRT2;
            }
            idx += 1;
        }
    }
    m
}

// Largest-magnitude eigenpair of a symmetric matrix.
fn top_eigen(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let e = SortedEigen::new(m);
    let n = m.nrows();
    let (lo, hi) = (e.values[0], e.values[n - 1]);
    if hi.abs() >= lo.abs() {
        (hi, e.vectors.column(n - 1).into_owned())
    } else {
        (lo, e.vectors.column(0).into_owned())
    }
}

impl Coordinates {
    fn new(fam: &SubspaceFamily, gamma: f64) -> Self {
        let by = fam.t_y.basis();
        let byx = fam.t_yx.basis();
        let (p, q) = (fam.p(), fam.q());
        Self { p, q, gamma, ny: by.dim(), nyx: byx.dim(), no: q * (q + 1) / 2, by, byx }
    }

    fn n_h(&self) -> usize {
        self.p + self.ny + self.nyx + self.no
    }

    fn n_23(&self) -> usize {
        self.ny + self.nyx
    }

    // Dense (D − L, K, O) blocks of F(E(c)) for c in H.
    fn assemble_f(&self, c: &[f64]) -> DMatrix<f64> {
        let (p, q) = (self.p, self.q);
        let mut y = -self.by.embed(&c[p..p + self.ny]);
        for i in 0..p {
            y[(i, i)] += c[i];
        }
        let k = self.byx.embed(&c[p + self.ny..p + self.ny + self.nyx]);
        let o = sym_embed(&c[p + self.ny + self.nyx..], q);
        stack(&y, &k, &o)
    }

    fn assemble_g(&self, c: &[f64]) -> DMatrix<f64> {
        let l = self.by.embed(&c[..self.ny]);
        let k = self.byx.embed(&c[self.ny..]);
        stack(&l, &k, &DMatrix::zeros(self.q, self.q))
    }

    // Coordinates of P_H F†(X).
    fn project_f(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let (p, q) = (self.p, self.q);
        let xy = symmetrize(&x.view((0, 0), (p, p)).into_owned());
        let xyx = x.view((0, p), (p, q)).into_owned();
        let xx = x.view((p, p), (q, q)).into_owned();
        let mut out = Vec::with_capacity(self.n_h());
        out.extend((0..p).map(|i| xy[(i, i)]));
        out.extend(self.by.coords(&xy).iter().copied());
        out.extend(self.byx.coords(&xyx).iter().copied());
        out.extend(sym_coords(&xx));
        DVector::from_vec(out)
    }

    // Coordinates of P_{H[2,3]} G†(X).
    fn project_g(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let (p, q) = (self.p, self.q);
        let xy = x.view((0, 0), (p, p)).into_owned();
        let xyx = x.view((0, p), (p, q)).into_owned();
        let mut out = Vec::with_capacity(self.n_23());
        out.extend(self.by.coords(&xy).iter().copied());
        out.extend(self.byx.coords(&xyx).iter().copied());
        DVector::from_vec(out)
    }

    /// `‖L‖₂` for `L` in `T_y`, with a subgradient in coordinates.
    fn norm_l(&self, c: &[f64]) -> (f64, DVector<f64>) {
        let r = self.by.rank();
        if r == 0 {
            return (0.0, DVector::zeros(self.ny));
        }
        let (a, x) = self.by.symmetric_factors(c);
        let p = self.p;
        let mut basis = DMatrix::zeros(p, 2 * r);
        basis.view_mut((0, 0), (p, r)).copy_from(&self.by.u);
        basis.view_mut((0, r), (p, r)).copy_from(&x);
        let qr = basis.qr();
        let rw = qr.r();
        let mut mid = DMatrix::zeros(2 * r, 2 * r);
        mid.view_mut((0, 0), (r, r)).copy_from(&a);
        mid.view_mut((0, r), (r, r)).fill_with_identity();
        mid.view_mut((r, 0), (r, r)).fill_with_identity();
        let small = symmetrize(&(&rw * mid * rw.transpose()));
        let (lam, e) = top_eigen(&small);
        let v = qr.q() * e;
        let g = self.by.coords_rank_one(&v, &v) * lam.signum();
        (lam.abs(), g)
    }

    /// `‖K‖₂` for `K` in `T_yx`, with a subgradient.
    fn norm_k(&self, c: &[f64]) -> (f64, DVector<f64>) {
        if self.byx.rank() == 0 {
            return (0.0, DVector::zeros(self.nyx));
        }
        let k = self.byx.embed(c);
        let svd = SortedSvd::new(&k);
        let u = svd.u.column(0).into_owned();
        let v = svd.v.column(0).into_owned();
        (svd.s[0], self.byx.coords_rank_one(&u, &v))
    }

    /// `Φ_γ` on `H` with a subgradient.
    fn phi(&self, c: &DVector<f64>) -> (f64, DVector<f64>) {
        let (p, q) = (self.p, self.q);
        let mut best = (0.0, DVector::zeros(self.n_h()));
        let (imax, dmax) = (0..p).map(|i| (i, c[i].abs())).fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        if dmax >= 0.0 {
            best.0 = dmax;
            best.1[imax] = c[imax].signum();
        }
        let (lv, lg) = self.norm_l(&c.as_slice()[p..p + self.ny]);
        if lv > best.0 {
            best.1.fill(0.0);
            best.1.rows_mut(p, self.ny).copy_from(&lg);
            best.0 = lv;
        }
        let (kv, kg) = self.norm_k(&c.as_slice()[p + self.ny..p + self.ny + self.nyx]);
        if kv / self.gamma > best.0 {
            best.1.fill(0.0);
            best.1.rows_mut(p + self.ny, self.nyx).copy_from(&(kg / self.gamma));
            best.0 = kv / self.gamma;
        }
        if q > 0 {
            let off = p + self.ny + self.nyx;
            let o = sym_embed(&c.as_slice()[off..], q);
            let (lam, v) = top_eigen(&o);
            if lam.abs() > best.0 {
                best.1.fill(0.0);
                let g = DVector::from_vec(sym_coords(&(&v * v.transpose() * lam.signum())));
                best.1.rows_mut(off, self.no).copy_from(&g);
                best.0 = lam.abs();
            }
        }
        best
    }

    /// Random point on the boundary of every block of the unit ball: of
    /// `Φ_γ` on `H` when `full`, of `Γ_γ` on `H[2,3]` otherwise.
    fn boundary_point(&self, rng: &mut rng::SeededRng, full: bool) -> DVector<f64> {
        let scaled = |c: DVector<f64>, norm: f64, target: f64| if norm > 1e-300 { c * (target / norm) } else { c };
        let mut out = Vec::new();
        if full {
            out.extend((0..self.p).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }));
        }
        let l = rng::unit_vector(rng, self.ny);
        let nl = self.norm_l(l.as_slice()).0;
        out.extend(scaled(l, nl, 1.0).iter().copied());
        let k = rng::unit_vector(rng, self.nyx);
        let nk = self.norm_k(k.as_slice()).0;
        out.extend(scaled(k, nk, self.gamma).iter().copied());
        if full && self.q > 0 {
            let o = rng::unit_vector(rng, self.no);
            let no = top_eigen(&sym_embed(o.as_slice(), self.q)).0.abs();
            out.extend(scaled(o, no, 1.0).iter().copied());
        }
        DVector::from_vec(out)
    }

    /// `Γ_γ` on `H[2,3]` with a subgradient.
    fn gamma_norm(&self, c: &DVector<f64>) -> (f64, DVector<f64>) {
        let (lv, lg) = self.norm_l(&c.as_slice()[..self.ny]);
        let (kv, kg) = self.norm_k(&c.as_slice()[self.ny..]);
        let mut g = DVector::zeros(self.n_23());
        if lv >= kv / self.gamma {
            g.rows_mut(0, self.ny).copy_from(&lg);
            (lv, g)
        } else {
            g.rows_mut(self.ny, self.nyx).copy_from(&(kg / self.gamma));
            (kv / self.gamma, g)
        }
    }
}

fn stack(y: &DMatrix<f64>, k: &DMatrix<f64>, o: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = k.shape();
    let mut m = DMatrix::zeros(p + q, p + q);
    m.view_mut((0, 0), (p, p)).copy_from(y);
    m.view_mut((0, p), (p, q)).copy_from(k);
    m.view_mut((p, 0), (q, p)).copy_from(&k.transpose());
    m.view_mut((p, p), (q, q)).copy_from(o);
    m
}

fn complement(u: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    x - u * (u.transpose() * x)
}

fn hcat(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts[0].nrows();
    let mut out = DMatrix::zeros(rows, parts.iter().map(|m| m.ncols()).sum());
    let mut c = 0;
    for m in parts {
        out.view_mut((0, c), (rows, m.ncols())).copy_from(m);
        c += m.ncols();
    }
    out
}

/// `c ↦ P_{H[2,3]⊥} G† I★ G (P_{H[2,3]} G† I★ G)⁻¹ c` followed by `Γ_γ`.
///
/// `G(h)` has rank at most `2 rank(T_y) + 4 rank(T_yx)`, so its image under
/// the Fisher operator and the complement projections stays in factored form.
struct CrossOperator<'a> {
    co: &'a Coordinates,
    sigma: &'a DMatrix<f64>,
    inv: DMatrix<f64>,
}

impl CrossOperator<'_> {
    // Factors (F1, F2) with G(h) = F1 F2ᵀ.
    fn factors(&self, h: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let co = self.co;
        let (p, q) = (co.p, co.q);
        let ry = co.by.rank();
        let (a, x) = co.by.symmetric_factors(&h[..co.ny]);
        let ux = hcat(&[&co.by.u, &x]);
        let mut mid = DMatrix::zeros(2 * ry, 2 * ry);
        mid.view_mut((0, 0), (ry, ry)).copy_from(&a);
        mid.view_mut((0, ry), (ry, ry)).fill_with_identity();
        mid.view_mut((ry, 0), (ry, ry)).fill_with_identity();
        let left_l = &ux * mid;
        let (xk, yk) = co.byx.rectangular_factors(&h[co.ny..]);
        let pk = hcat(&[&co.byx.u, &xk]);
        let qk = hcat(&[&yk, &co.byx.v]);
        let (nl, nk) = (2 * ry, pk.ncols());
        let mut f1 = DMatrix::zeros(p + q, nl + 2 * nk);
        let mut f2 = DMatrix::zeros(p + q, nl + 2 * nk);
        f1.view_mut((0, 0), (p, nl)).copy_from(&left_l);
        f2.view_mut((0, 0), (p, nl)).copy_from(&ux);
        f1.view_mut((0, nl), (p, nk)).copy_from(&pk);
        f2.view_mut((p, nl), (q, nk)).copy_from(&qk);
        f1.view_mut((p, nl + nk), (q, nk)).copy_from(&qk);
        f2.view_mut((0, nl + nk), (p, nk)).copy_from(&pk);
        (f1, f2)
    }

    fn norm_with_gradient(&self, c: &DVector<f64>) -> (f64, DVector<f64>) {
        let co = self.co;
        let (p, q, gamma) = (co.p, co.q, co.gamma);
        let h = &self.inv * c;
        let (f1, f2) = self.factors(h.as_slice());
        let s1 = self.sigma * f1;
        let s2 = self.sigma * f2;
        let s1y = s1.rows(0, p).into_owned();
        let s2y = s2.rows(0, p).into_owned();
        let sig_y = self.sigma.columns(0, p);
        let sig_x = self.sigma.columns(p, q);
        let mut grad_h = DVector::zeros(co.n_23());

        // L block: Y_L = A Bᵀ, symmetric, with range inside span(A).
        let (mut best, mut which) = (0.0, None);
        let a_l = complement(&co.by.u, &s1y);
        if a_l.ncols() > 0 {
            let b_l = complement(&co.by.u, &s2y);
            let qr = a_l.qr();
            let qa = qr.q();
            let small = symmetrize(&(qr.r() * (b_l.transpose() * &qa)));
            let (lam, e) = top_eigen(&small);
            best = lam.abs();
            which = Some((lam.signum(), qa * e));
        }
        // K block: Y_K = P⊥_U S1_y S2_xᵀ P⊥_V.
        let mut k_best = None;
        if q > 0 && s1.ncols() > 0 {
            let a_k = complement(&co.byx.u, &s1y);
            let b_k = complement(&co.byx.v, &s2.rows(p, q).into_owned());
            let ql = a_k.qr();
            let qr = b_k.qr();
            let svd = SortedSvd::new(&(ql.r() * qr.r().transpose()));
            if svd.s.len() > 0 && svd.s[0] / gamma > best {
                best = svd.s[0] / gamma;
                let u = ql.q() * svd.u.column(0);
                let v = qr.q() * svd.v.column(0);
                k_best = Some((u, v));
            }
        }
        if let Some((u, v)) = k_best {
            let a = &u - &co.byx.u * (co.byx.u.transpose() * &u);
            let b = &v - &co.byx.v * (co.byx.v.transpose() * &v);
            let z = sig_y * a;
            let w = sig_x * b;
            let (zy, zx) = (z.rows(0, p).into_owned(), z.rows(p, q).into_owned());
            let (wy, wx) = (w.rows(0, p).into_owned(), w.rows(p, q).into_owned());
            grad_h.rows_mut(0, co.ny).copy_from(&(co.by.coords_rank_one(&zy, &wy) / gamma));
            let gk = co.byx.coords_rank_one(&zy, &wx) + co.byx.coords_rank_one(&wy, &zx);
            grad_h.rows_mut(co.ny, co.nyx).copy_from(&(gk / gamma));
        } else if let Some((s, v)) = which {
            let w = &v - &co.by.u * (co.by.u.transpose() * &v);
            let z = sig_y * w;
            let (zy, zx) = (z.rows(0, p).into_owned(), z.rows(p, q).into_owned());
            grad_h.rows_mut(0, co.ny).copy_from(&(co.by.coords_rank_one(&zy, &zy) * s));
            if q > 0 {
                grad_h.rows_mut(co.ny, co.nyx).copy_from(&(co.byx.coords_rank_one(&zy, &zx) * (2.0 * s)));
            }
        }
        (best, self.inv.transpose() * grad_h)
    }
}

/// Multi-start projected subgradient method for a scale-invariant ratio.
///
/// `eval` returns the ratio and its gradient at a point on the unit sphere.
///
/// Odd restarts draw their start from `start` when given, even ones
/// uniformly on the sphere.
fn optimize_ratio(
    n: usize,
    opts: &EstimatorOptions,
    seed: u64,
    maximize: bool,
    mut start: Option<&mut dyn FnMut(&mut rng::SeededRng) -> DVector<f64>>,
    mut eval: impl FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
) -> f64 {
    let mut rng = rng::seeded(seed);
    let mut best = if maximize { f64::NEG_INFINITY } else { f64::INFINITY };
    let sign = if maximize { 1.0 } else { -1.0 };
    for restart in 0..opts.restarts.max(1) {
        let mut c = match start.as_mut() {
            Some(draw) if restart % 2 == 1 => {
                let c = draw(&mut rng);
                let norm = c.norm();
                if norm > 1e-300 && norm.is_finite() { c / norm } else { rng::unit_vector(&mut rng, n) }
            }
            _ => rng::unit_vector(&mut rng, n),
        };
        for k in 0..opts.iterations.max(1) {
            let Some((r, mut g)) = eval(&c) else { break };
            if (maximize && r > best) || (!maximize && r < best) {
                best = r;
            }
            g -= &c * g.dot(&c);
            let gn = g.norm();
            if !(gn > 1e-14) {
                break;
            }
            let step = 0.3 / ((k + 1) as f64).sqrt();
            c += g * (sign * step / gn);
            c /= c.norm();
        }
    }
    best
}

fn ratio_eval<'a>(
    op: &'a DMatrix<f64>,
    norm: impl Fn(&DVector<f64>) -> (f64, DVector<f64>) + 'a,
) -> impl FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)> + 'a {
    move |c| {
        let (den, dg) = norm(c);
        if !(den > 1e-300) {
            return None;
        }
        let (num, ng) = norm(&(op * c));
        let r = num / den;
        Some((r, (op.transpose() * ng - dg * r) / den))
    }
}

/// Estimates `(χ, Ξ, φ)` for one family.
///
/// When `H[2,3]` is the zero space the restricted operator is the identity
/// on it, and `Ξ = 1`, `φ = 0` by convention.
pub fn estimate_quantities(
    op: &FisherOperator,
    fam: &SubspaceFamily,
    gamma: f64,
    opts: &EstimatorOptions,
) -> Result<FisherQuantities> {
    NormParams::new(gamma)?;
    let (p, q) = (fam.p(), fam.q());
    if op.dim() != p + q {
        bail!(Dimension, "Fisher operator has size {}, family has p + q = {}", op.dim(), p + q);
    }
    if p + q > opts.max_dim {
        bail!(Validation, "p + q = {} exceeds the dense-basis capacity {}", p + q, opts.max_dim);
    }
    let co = Coordinates::new(fam, gamma);
    let sigma = &*op.sigma_star;
    let fisher = |m: &DMatrix<f64>| sigma * m * sigma;

    let nh = co.n_h();
    let mut m_h = DMatrix::zeros(nh, nh);
    let mut e = alloc::vec![0.0; nh];
    for j in 0..nh {
        e[j] = 1.0;
        m_h.set_column(j, &co.project_f(&fisher(&co.assemble_f(&e))));
        e[j] = 0.0;
    }
    // Minimizers have the form M⁻¹g with g on the boundary of the unit ball.
    let lu_h = m_h.clone().lu();
    let mut from_boundary = |rng: &mut rng::SeededRng| lu_h.solve(&co.boundary_point(rng, true)).unwrap_or_else(|| DVector::zeros(nh));
    let chi = optimize_ratio(nh, opts, opts.seed, false, Some(&mut from_boundary), ratio_eval(&m_h, |c| co.phi(c)));

    let n23 = co.n_23();
    if n23 == 0 {
        return Ok(FisherQuantities { chi, xi: 1.0, varphi: 0.0, singular: false });
    }
    let mut m_23 = DMatrix::zeros(n23, n23);
    let mut e = alloc::vec![0.0; n23];
    for j in 0..n23 {
        e[j] = 1.0;
        m_23.set_column(j, &co.project_g(&fisher(&co.assemble_g(&e))));
        e[j] = 0.0;
    }
    let lu_23 = m_23.clone().lu();
    let mut from_boundary = |rng: &mut rng::SeededRng| lu_23.solve(&co.boundary_point(rng, false)).unwrap_or_else(|| DVector::zeros(n23));
    let xi = optimize_ratio(n23, opts, opts.seed ^ 0x51, false, Some(&mut from_boundary), ratio_eval(&m_23, |c| co.gamma_norm(c)));
    if !(xi > 1e-10) {
        log::warn!("restricted operator on H[2,3] is numerically singular (Ξ ≈ {xi:.2e}); φ set to infinity");
        return Ok(FisherQuantities { chi, xi, varphi: f64::INFINITY, singular: true });
    }

    let normal = m_23.transpose() * &m_23 + DMatrix::identity(n23, n23) * opts.ridge;
    let Some(chol) = normal.cholesky() else {
        return Ok(FisherQuantities { chi, xi, varphi: f64::INFINITY, singular: true });
    };
    let cross = CrossOperator { co: &co, sigma, inv: chol.solve(&m_23.transpose()) };
    let varphi = optimize_ratio(n23, opts, opts.seed ^ 0x9f, true, None, |c| {
        let (den, dg) = co.gamma_norm(c);
        if !(den > 1e-300) {
            return None;
        }
        let (num, ng) = cross.norm_with_gradient(c);
        let r = num / den;
        Some((r, (ng - dg * r) / den))
    });
    Ok(FisherQuantities { chi, xi, varphi: varphi.max(0.0), singular: false })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub chi_min: f64,
    pub xi_min: f64,
    pub varphi_max: f64,
    /// `χ_min`
    pub alpha: f64,
    /// `2 / (1 − φ_max) − 1`, infinite when `φ_max ≥ 1`.
    pub beta: f64,
    pub alpha_req: f64,
    pub beta_req: f64,
    pub pass_chi: bool,
    pub pass_xi: bool,
    pub pass_varphi: bool,
    pub families: usize,
    pub restarts: usize,
    pub iterations: usize,
    pub max_angle: f64,
    pub per_family: Vec<FisherQuantities>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.pass_chi && self.pass_xi && self.pass_varphi
    }
}

/// Worst case over families, and pass flags `χ ≥ α`, `Ξ > 0`,
/// `φ ≤ 1 − 2/(β + 1)`. The `χ` comparison allows a relative slack of
/// `1e-12` for rounding.
pub fn aggregate_assumptions(
    per_family: Vec<FisherQuantities>,
    max_angle: f64,
    alpha_req: f64,
    beta_req: f64,
    opts: &EstimatorOptions,
) -> Result<AssumptionReport> {
    if !(alpha_req > 0.0) {
        bail!(Validation, "alpha threshold must be positive");
    }
    if !(beta_req >= 2.0) {
        bail!(Validation, "beta threshold must be at least 2");
    }
    if per_family.is_empty() {
        bail!(Validation, "no families to aggregate");
    }
    let chi_min = per_family.iter().map(|f| f.chi).fold(f64::INFINITY, f64::min);
    let xi_min = per_family.iter().map(|f| f.xi).fold(f64::INFINITY, f64::min);
    let varphi_max = per_family.iter().map(|f| f.varphi).fold(0.0, f64::max);
    let beta = if varphi_max < 1.0 { 2.0 / (1.0 - varphi_max) - 1.0 } else { f64::INFINITY };
    Ok(AssumptionReport {
        chi_min,
        xi_min,
        varphi_max,
        alpha: chi_min,
        beta,
        alpha_req,
        beta_req,
        pass_chi: chi_min >= alpha_req * (1.0 - PASS_SLACK),
        pass_xi: xi_min > 0.0,
        pass_varphi: varphi_max <= 1.0 - 2.0 / (beta_req + 1.0),
        families: per_family.len(),
        restarts: opts.restarts,
        iterations: opts.iterations,
        max_angle,
        per_family,
    })
}

const PASS_SLACK: f64 = 1e-12;

/// Per-family estimator seed.
pub fn family_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Samples families around the population tangent spaces and aggregates the
/// estimated quantities.
#[allow(clippy::too_many_arguments)]
pub fn verify_assumptions(
    pop: &PopulationModel,
    gamma: f64,
    omega_y: f64,
    omega_yx: f64,
    alpha_req: f64,
    beta_req: f64,
    n_samples: usize,
    seed: u64,
    opts: &EstimatorOptions,
) -> Result<AssumptionReport> {
    let op = FisherOperator::from_population(pop);
    let families = sample_family(pop, omega_y, omega_yx, n_samples, seed)?;
    let mut per = Vec::with_capacity(families.len());
    for (i, fam) in families.iter().enumerate() {
        let o = EstimatorOptions { seed: family_seed(opts.seed, i), ..*opts };
        per.push(estimate_quantities(&op, fam, gamma, &o)?);
    }
    let max_angle = families.iter().map(|f| f.max_angle()).fold(0.0, f64::max);
    aggregate_assumptions(per, max_angle, alpha_req, beta_req, opts)
}
