//! Reference minimizers and invariant checks shared by the integration tests
//! and the acceptance suite. Nothing here calls the library's prox maps or
//! solver, so agreement with them is a real cross-check.

#![allow(dead_code)]

use cofactor_core::interpret::{interpretation_for, CandidateModel};
use cofactor_core::linalg::{frob_inner, spectral_norm, symmetrize};
use cofactor_core::ops::{
    block_adjoint, block_assemble, rho_distance, tangent_of_kind, BlockMode, BlockTuple, SymMatrix, TangentKind,
};
use cofactor_core::population::{generate_synthetic, sample_observations, Dataset};
use cofactor_core::rng::{gaussian_matrix, gaussian_vector, seeded, SeededRng};
use cofactor_core::solver::{prox_logdet, prox_nuclear, prox_trace_psd, solve_composite, SolverOptions};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

pub type Check = Result<(), String>;

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn random_sym(rng: &mut SeededRng, n: usize) -> DMatrix<f64> {
    symmetrize(&gaussian_matrix(rng, n, n))
}

pub fn random_tuple(rng: &mut SeededRng, p: usize, q: usize) -> BlockTuple {
    BlockTuple::new(
        SymMatrix::from_diagonal(&gaussian_vector(rng, p)),
        SymMatrix::symmetric_part(&gaussian_matrix(rng, p, p)),
        gaussian_matrix(rng, p, q),
        SymMatrix::symmetric_part(&gaussian_matrix(rng, q, q)),
    )
    .unwrap()
}

/// Minimizer of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// `argmin_{L ⪰ 0} t·tr L + ½‖L − M‖²_F` for 2×2 `M`. With
/// `L = Q(θ) diag(l) Q(θ)ᵀ` the best `l` for a fixed rotation is explicit, so
/// only the angle is searched: a dense grid, then golden section.
pub fn psd2_grid_min(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let rot = |th: f64| DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
    let fit = |th: f64| {
        let q = rot(th);
        let c = q.transpose() * m * &q;
        let l = [(c[(0, 0)] - t).max(0.0), (c[(1, 1)] - t).max(0.0)];
        let val = t * (l[0] + l[1]) + 0.5 * ((l[0] - c[(0, 0)]).powi(2) + (l[1] - c[(1, 1)]).powi(2)) + c[(0, 1)].powi(2);
        (val, q, l)
    };
    let n = 4000;
    let h = core::f64::consts::PI / n as f64;
    let best = (0..n).map(|i| i as f64 * h).min_by(|a, b| fit(*a).0.total_cmp(&fit(*b).0)).unwrap();
    let th = golden_section(|th| fit(th).0, best - h, best + h, 1e-14);
    let (_, q, l) = fit(th);
    &q * DMatrix::from_diagonal(&DVector::from_row_slice(&l)) * q.transpose()
}

// ---------------------------------------------------------------------------
// Independent reference solver for the composite program.

fn ref_logdet(m: &DMatrix<f64>) -> Option<f64> {
    m.clone().cholesky().map(|c| 2.0 * c.l().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

fn ref_nuclear(k: &DMatrix<f64>) -> f64 {
    if k.ncols() == 0 {
        return 0.0;
    }
    let e = SymmetricEigen::new(k.transpose() * k);
    e.eigenvalues.iter().map(|x| x.max(0.0).sqrt()).sum()
}

// Singular value shrinkage through the eigenvectors of KᵀK.
fn ref_svt(k: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    if k.ncols() == 0 {
        return k.clone();
    }
    let e = SymmetricEigen::new(k.transpose() * k);
    let q = k.ncols();
    let mut scale = DMatrix::zeros(q, q);
    for i in 0..q {
        let s = e.eigenvalues[i].max(0.0).sqrt();
        if s > t {
            scale[(i, i)] = (s - t) / s;
        }
    }
    k * &e.eigenvectors * scale * e.eigenvectors.transpose()
}

fn ref_psd_shrink(l: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let e = SymmetricEigen::new(symmetrize(l));
    let d = e.eigenvalues.map(|x| (x - t).max(0.0));
    symmetrize(&(&e.eigenvectors * DMatrix::from_diagonal(&d) * e.eigenvectors.transpose()))
}

#[derive(Clone)]
struct RefPoint {
    d: DVector<f64>,
    l: DMatrix<f64>,
    k: DMatrix<f64>,
    o: DMatrix<f64>,
}

impl RefPoint {
    fn theta(&self) -> DMatrix<f64> {
        let (p, q) = self.k.shape();
        let mut m = DMatrix::zeros(p + q, p + q);
        m.view_mut((0, 0), (p, p)).copy_from(&(DMatrix::from_diagonal(&self.d) - &self.l));
        m.view_mut((0, p), (p, q)).copy_from(&self.k);
        m.view_mut((p, 0), (q, p)).copy_from(&self.k.transpose());
        m.view_mut((p, p), (q, q)).copy_from(&self.o);
        m
    }

    fn axpy(&self, s: f64, g: &RefPoint) -> RefPoint {
        RefPoint { d: &self.d + &g.d * s, l: &self.l + &g.l * s, k: &self.k + &g.k * s, o: &self.o + &g.o * s }
    }

    fn dot(&self, g: &RefPoint) -> f64 {
        self.d.dot(&g.d) + self.l.dot(&g.l) + self.k.dot(&g.k) + self.o.dot(&g.o)
    }
}

/// Smooth part `−log det Θ + tr(ΘS)`, or `None` outside the PD cone.
fn ref_smooth(x: &RefPoint, s: &DMatrix<f64>) -> Option<f64> {
    let th = x.theta();
    Some(-ref_logdet(&th)? + th.dot(s))
}

fn ref_grad(x: &RefPoint, s: &DMatrix<f64>) -> RefPoint {
    let (p, q) = x.k.shape();
    let g = s - x.theta().try_inverse().unwrap();
    RefPoint {
        d: g.view((0, 0), (p, p)).diagonal(),
        l: -symmetrize(&g.view((0, 0), (p, p)).into_owned()),
        k: g.view((0, p), (p, q)) * 2.0,
        o: symmetrize(&g.view((p, p), (q, q)).into_owned()),
    }
}

/// Objective of the composite program at a structured point.
pub fn reference_objective(
    d: &DVector<f64>,
    l: &DMatrix<f64>,
    k: &DMatrix<f64>,
    o: &DMatrix<f64>,
    s: &DMatrix<f64>,
    lambda: f64,
    gamma: f64,
) -> Option<f64> {
    let x = RefPoint { d: d.clone(), l: l.clone(), k: k.clone(), o: o.clone() };
    Some(ref_smooth(&x, s)? + lambda * (gamma * ref_nuclear(k) + l.trace()))
}

/// Accelerated proximal gradient with backtracking and adaptive restart.
/// Returns the best objective value found.
pub fn reference_composite(s: &DMatrix<f64>, p: usize, lambda: f64, gamma: f64, max_iters: usize) -> f64 {
    let m = s.nrows();
    let q = m - p;
    let shift = 1e-2 * s.trace() / m as f64;
    let th0 = (s + DMatrix::identity(m, m) * shift).try_inverse().unwrap();
    let mut x = RefPoint {
        d: th0.view((0, 0), (p, p)).diagonal(),
        l: DMatrix::zeros(p, p),
        k: th0.view((0, p), (p, q)).into_owned(),
        o: th0.view((p, p), (q, q)).into_owned(),
    };
    let total = |x: &RefPoint| ref_smooth(x, s).map(|f| f + lambda * (gamma * ref_nuclear(&x.k) + x.l.trace()));
    let prox = |y: &RefPoint, g: &RefPoint, t: f64| {
        let z = y.axpy(-t, g);
        RefPoint { d: z.d, l: ref_psd_shrink(&z.l, t * lambda), k: ref_svt(&z.k, t * lambda * gamma), o: symmetrize(&z.o) }
    };
    let mut fx = total(&x).unwrap();
    let mut y = x.clone();
    let mut tk: f64 = 1.0;
    let mut step = 1.0;
    let mut stall = 0;
    for _ in 0..max_iters {
        let fy = match ref_smooth(&y, s) {
            Some(v) => v,
            None => {
                y = x.clone();
                tk = 1.0;
                ref_smooth(&y, s).unwrap()
            }
        };
        let g = ref_grad(&y, s);
        let mut next;
        loop {
            next = prox(&y, &g, step);
            let diff = next.axpy(-1.0, &y);
            if let Some(fn_) = ref_smooth(&next, s) {
                if fn_ <= fy + g.dot(&diff) + diff.dot(&diff) / (2.0 * step) + 1e-15 * fy.abs() {
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-16 {
                break;
            }
        }
        let f_next = total(&next).unwrap_or(f64::INFINITY);
        if f_next > fx {
            // Restart momentum from the last accepted point.
            y = x.clone();
            tk = 1.0;
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * tk * tk).sqrt()) / 2.0;
        let momentum = (tk - 1.0) / t_next;
        y = next.axpy(momentum, &next.axpy(-1.0, &x));
        if fx - f_next <= 1e-15 * fx.abs().max(1.0) {
            stall += 1;
            if stall > 50 {
                fx = f_next;
                break;
            }
        } else {
            stall = 0;
        }
        x = next;
        fx = f_next;
        tk = t_next;
        step *= 1.5;
    }
    fx
}

// ---------------------------------------------------------------------------
// Invariant checks. Each draws one random case from `rng`.

pub fn check_adjointness(rng: &mut SeededRng) -> Check {
    let p = rng.random_range(1..6);
    let q = rng.random_range(1..4);
    let t = random_tuple(rng, p, q);
    let m = random_sym(rng, p + q);
    for mode in [BlockMode::F, BlockMode::G] {
        let lhs = frob_inner(&block_assemble(&t, mode), &m);
        let adj = block_adjoint(&m, p, mode).map_err(|e| e.to_string())?;
        let rhs = match mode {
            BlockMode::F => t.pairing_f(&adj),
            BlockMode::G => t.pairing_g(&adj),
        };
        ensure((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), || format!("{mode:?}: {lhs} vs {rhs}"))?;
    }
    Ok(())
}

pub fn check_projection(rng: &mut SeededRng) -> Check {
    let p = rng.random_range(2..8);
    let symmetric = rng.random_bool(0.5);
    let q = if symmetric { p } else { rng.random_range(2..8) };
    let r = rng.random_range(1..=p.min(q));
    let n = gaussian_matrix(rng, p, r) * gaussian_matrix(rng, r, q);
    let (n, kind) = if symmetric { (symmetrize(&n), TangentKind::Symmetric) } else { (n, TangentKind::Rectangular) };
    let r = if symmetric { cofactor_core::ops::numerical_rank(&n, 1e-8) } else { r };
    let t = tangent_of_kind(&n, r, kind).map_err(|e| e.to_string())?;
    let (a, b) = if symmetric {
        (random_sym(rng, p), random_sym(rng, p))
    } else {
        (gaussian_matrix(rng, p, q), gaussian_matrix(rng, p, q))
    };
    let pa = t.project(&a);
    let scale = a.norm().max(1.0);
    ensure((t.project(&pa) - &pa).norm() <= 1e-10 * scale, || "projection is not idempotent".into())?;
    let (l, r_) = (frob_inner(&pa, &b), frob_inner(&a, &t.project(&b)));
    ensure((l - r_).abs() <= 1e-10 * scale * b.norm().max(1.0), || format!("not self-adjoint: {l} vs {r_}"))?;
    ensure(spectral_norm(&pa) <= 2.0 * spectral_norm(&a) * (1.0 + 1e-12), || "amplification above 2".into())?;
    ensure((t.project(&n) - &n).norm() <= 1e-9 * n.norm().max(1.0), || "N not in T(N)".into())
}

pub fn check_firm_nonexpansive(rng: &mut SeededRng) -> Check {
    let n = rng.random_range(1..6);
    let firm = |pa: &DMatrix<f64>, pb: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>, name: &str| {
        let dp = pa - pb;
        let lhs = dp.norm_squared();
        let rhs = dp.dot(&(a - b));
        ensure(lhs <= rhs + 1e-8, || format!("{name}: {lhs} > {rhs}"))
    };
    let (a, b) = (random_sym(rng, n) * 3.0, random_sym(rng, n) * 3.0);
    let t = rng.random_range(0.0..2.0);
    firm(&prox_trace_psd(&a, t), &prox_trace_psd(&b, t), &a, &b, "prox_trace_psd")?;
    let m = rng.random_range(1..5);
    let (ka, kb) = (gaussian_matrix(rng, n, m) * 3.0, gaussian_matrix(rng, n, m) * 3.0);
    firm(&prox_nuclear(&ka, t), &prox_nuclear(&kb, t), &ka, &kb, "prox_nuclear")?;
    let rho = rng.random_range(0.2..5.0);
    let x = gaussian_matrix(rng, n, n + 3);
    let s = &x * x.transpose() / (n + 3) as f64;
    let za = prox_logdet(&a, &s, rho).map_err(|e| e.to_string())?;
    let zb = prox_logdet(&b, &s, rho).map_err(|e| e.to_string())?;
    firm(&za, &zb, &a, &b, "prox_logdet")
}

pub fn check_rho_pseudometric(rng: &mut SeededRng) -> Check {
    let p = rng.random_range(3..7);
    let r = rng.random_range(1..3);
    let symmetric = rng.random_bool(0.5);
    let q = if symmetric { p } else { rng.random_range(3..7) };
    let kind = if symmetric { TangentKind::Symmetric } else { TangentKind::Rectangular };
    let base = gaussian_matrix(rng, p, r) * gaussian_matrix(rng, r, q);
    let base = if symmetric { &base * base.transpose() } else { base };
    let mut spaces = Vec::new();
    for _ in 0..3 {
        let pert = gaussian_matrix(rng, p, r) * gaussian_matrix(rng, r, q) * 0.4;
        let pert = if symmetric { &pert * pert.transpose() } else { pert };
        spaces.push(tangent_of_kind(&(&base + pert), r, kind).map_err(|e| e.to_string())?);
    }
    let rho = |i: usize, j: usize| rho_distance(&spaces[i], &spaces[j]).unwrap();
    ensure(rho(0, 0) <= 1e-8, || "rho(T, T) != 0".into())?;
    let (ab, ba) = (rho(0, 1), rho(1, 0));
    ensure((ab - ba).abs() <= 1e-8, || format!("asymmetric: {ab} vs {ba}"))?;
    let (bc, ac) = (rho(1, 2), rho(0, 2));
    ensure(ac <= ab + bc + 1e-8, || format!("triangle: {ac} > {ab} + {bc}"))
}

fn shuffle(rng: &mut SeededRng, n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
    v
}

/// Permuting the responses permutes `(D̂, L̂, rows of Θ̂_yx)`; permuting the
/// covariates permutes the covariate strengths.
pub fn check_permutation_equivariance(rng: &mut SeededRng) -> Check {
    let (p, q) = (rng.random_range(4..7), rng.random_range(2..4));
    let seed: u64 = rng.random();
    let pop = generate_synthetic(p, q, 1, 1, 10.0, seed).map_err(|e| e.to_string())?;
    let data = sample_observations(&pop, 300, seed ^ 1).map_err(|e| e.to_string())?;
    let opts = SolverOptions::new(0.05, 1.5).with_tolerance(1e-10);
    let base = solve_composite(&data, &opts).map_err(|e| e.to_string())?;
    let py = shuffle(rng, p);
    let px = shuffle(rng, q);
    let mut cols: Vec<usize> = py.clone();
    cols.extend(px.iter().map(|&j| p + j));
    let rows = DMatrix::from_fn(data.n(), p + q, |i, j| data.rows[(i, cols[j])]);
    let permuted = Dataset::new(rows, p).map_err(|e| e.to_string())?;
    let other = solve_composite(&permuted, &opts).map_err(|e| e.to_string())?;
    let (e0, e1) = (&base.estimate, &other.estimate);
    let tol = 1e-5;
    let d_perm = DVector::from_fn(p, |i, _| e0.d_y[py[i]]);
    ensure((&d_perm - &e1.d_y).amax() <= tol, || "D not permuted".into())?;
    let l_perm = DMatrix::from_fn(p, p, |i, j| e0.l_y[(py[i], py[j])]);
    ensure((&l_perm - &*e1.l_y).amax() <= tol, || "L not permuted".into())?;
    let k0 = e0.theta_yx();
    let k_perm = DMatrix::from_fn(p, q, |i, j| k0[(py[i], px[j])]);
    ensure((&k_perm - e1.theta_yx()).amax() <= tol, || "Theta_yx not permuted".into())?;
    let cand = |est: &cofactor_core::ops::BlockPrecision, d: usize| CandidateModel {
        estimate: est.clone(),
        lambda: opts.lambda,
        gamma: opts.gamma,
        lambda_index: 0,
        gamma_index: 0,
        d,
        rank_l: 0,
        objective: 0.0,
        converged: true,
        conditions: None,
        deviation: None,
    };
    let d = base.rank_theta_yx.min(other.rank_theta_yx).max(1);
    let s0 = interpretation_for(&cand(e0, d)).strengths;
    let s1 = interpretation_for(&cand(e1, d)).strengths;
    let s_perm = DVector::from_fn(q, |i, _| s0[px[i]]);
    ensure((&s_perm - &s1).amax() <= 1e-4, || format!("strengths not permuted: {s_perm} vs {s1}"))
}

/// Runs `check` on `cases` seeded draws and returns the first failure.
pub fn run_cases(name: &str, cases: usize, seed: u64, check: impl Fn(&mut SeededRng) -> Check) -> Check {
    for i in 0..cases {
        let mut rng = seeded(seed.wrapping_add(i as u64));
        check(&mut rng).map_err(|e| format!("{name}, case {i}: {e}"))?;
    }
    Ok(())
}
