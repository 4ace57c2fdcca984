//! JSON documents written and read by the command line.

use std::io::Write;
use std::path::Path;

use cofactor_core::fisher::{AssumptionReport, TheoremConstants};
use cofactor_core::ops::SymMatrix;
use cofactor_core::population::{build_population, FactorModelParams, PopulationModel};
use cofactor_core::solver::{KktResiduals, SolveReport};
use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cv::{CvPoint, CvResult};
use crate::error::{invalid, HarnessError, Result};

pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        invalid!("matrix rows must all have {ncols} entries");
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Parameters of a composite factor model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub p: usize,
    pub q: usize,
    pub k_x: usize,
    pub k_u: usize,
    pub a: Vec<Vec<f64>>,
    pub b_u: Vec<Vec<f64>>,
    pub sigma_zeta_u: Vec<Vec<f64>>,
    pub sigma_eps: Vec<f64>,
    pub sigma_x: Vec<Vec<f64>>,
}

impl ModelFile {
    pub fn from_population(pop: &PopulationModel) -> Self {
        Self {
            p: pop.p(),
            q: pop.q(),
            k_x: pop.k_x,
            k_u: pop.k_u,
            a: rows_of(&pop.a),
            b_u: rows_of(&pop.b_u),
            sigma_zeta_u: rows_of(&pop.sigma_zeta_u),
            sigma_eps: pop.sigma_eps.iter().copied().collect(),
            sigma_x: rows_of(&pop.sigma_x),
        }
    }

    pub fn to_population(&self) -> Result<PopulationModel> {
        let k = self.b_u.first().map_or(0, Vec::len);
        let szu = matrix_from_rows(&self.sigma_zeta_u, self.sigma_zeta_u.len())?;
        let pop = build_population(
            matrix_from_rows(&self.a, self.q)?,
            matrix_from_rows(&self.b_u, k)?,
            SymMatrix::new(szu)?,
            DVector::from_vec(self.sigma_eps.clone()),
            SymMatrix::new(matrix_from_rows(&self.sigma_x, self.q)?)?,
        )?;
        if (pop.p(), pop.q(), pop.k_x, pop.k_u) != (self.p, self.q, self.k_x, self.k_u) {
            invalid!("model file shape or ranks disagree with its matrices");
        }
        Ok(pop)
    }
}

/// A factor model `diag(d) − l` over the responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorFile {
    pub p: usize,
    pub rank: usize,
    pub d: Vec<f64>,
    pub l: Vec<Vec<f64>>,
}

impl FactorFile {
    pub fn new(fm: &FactorModelParams, rank: usize) -> Self {
        Self { p: fm.p(), rank, d: fm.d.iter().copied().collect(), l: rows_of(&fm.l) }
    }

    pub fn to_params(&self) -> Result<FactorModelParams> {
        let l = SymMatrix::new(matrix_from_rows(&self.l, self.p)?)?;
        Ok(FactorModelParams::new(DVector::from_vec(self.d.clone()), l)?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KktFile {
    pub max: f64,
    pub x_block: f64,
    pub diagonal: f64,
    pub l_tangent: f64,
    pub l_normal: f64,
    pub yx_tangent: f64,
    pub yx_normal: f64,
}

impl From<&KktResiduals> for KktFile {
    fn from(k: &KktResiduals) -> Self {
        Self {
            max: k.max(),
            x_block: k.x_block,
            diagonal: k.diagonal,
            l_tangent: k.l_tangent,
            l_normal: k.l_normal,
            yx_tangent: k.yx_tangent,
            yx_normal: k.yx_normal,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub lambda: f64,
    pub gamma: f64,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub kkt: KktFile,
    pub rank_l_y: usize,
    pub rank_theta_yx: usize,
    pub d_y: Vec<f64>,
    pub l_y: Vec<Vec<f64>>,
    pub theta_yx: Vec<Vec<f64>>,
    pub theta_x: Vec<Vec<f64>>,
    /// `−Θ̂_y⁻¹ Θ̂_yx`
    pub a_hat: Vec<Vec<f64>>,
}

impl FitReport {
    pub fn new(r: &SolveReport, kkt: &KktResiduals, lambda: f64, gamma: f64, n: usize, a_hat: &DMatrix<f64>) -> Self {
        let e = &r.estimate;
        Self {
            lambda,
            gamma,
            n,
            converged: r.converged,
            iterations: r.iterations,
            objective: r.objective,
            primal_residual: r.primal_residual,
            dual_residual: r.dual_residual,
            kkt: kkt.into(),
            rank_l_y: r.rank_l_y,
            rank_theta_yx: r.rank_theta_yx,
            d_y: e.d_y.iter().copied().collect(),
            l_y: rows_of(&e.l_y),
            theta_yx: rows_of(&e.theta_yx()),
            theta_x: rows_of(&e.theta_x()),
            a_hat: rows_of(a_hat),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorFitReport {
    pub lambda: f64,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub model: FactorFile,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionSummary {
    pub chi_min: f64,
    pub xi_min: f64,
    pub varphi_max: f64,
    pub alpha: f64,
    pub beta: f64,
    pub alpha_req: f64,
    pub beta_req: f64,
    pub pass_chi: bool,
    pub pass_xi: bool,
    pub pass_varphi: bool,
    pub passed: bool,
    pub families: usize,
    pub restarts: usize,
    pub iterations: usize,
    pub max_angle_deg: f64,
}

impl From<&AssumptionReport> for AssumptionSummary {
    fn from(r: &AssumptionReport) -> Self {
        Self {
            chi_min: r.chi_min,
            xi_min: r.xi_min,
            varphi_max: r.varphi_max,
            alpha: r.alpha,
            beta: r.beta,
            alpha_req: r.alpha_req,
            beta_req: r.beta_req,
            pass_chi: r.pass_chi,
            pass_xi: r.pass_xi,
            pass_varphi: r.pass_varphi,
            passed: r.passed(),
            families: r.families,
            restarts: r.restarts,
            iterations: r.iterations,
            max_angle_deg: r.max_angle,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsSummary {
    pub psi: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub m: f64,
    pub m_bar: f64,
    pub kappa: f64,
    pub c_tilde: f64,
    pub c_samp: f64,
    pub n_min: f64,
    pub lambda_lo_at_n_min: f64,
    pub lambda_hi: f64,
}

impl From<&TheoremConstants> for ConstantsSummary {
    fn from(c: &TheoremConstants) -> Self {
        let n = c.n_min();
        let iv = c.lambda_interval(n);
        Self {
            psi: c.psi,
            alpha: c.alpha,
            beta: c.beta,
            gamma: c.gamma,
            m: c.m,
            m_bar: c.m_bar,
            kappa: c.kappa,
            c_tilde: c.c_tilde,
            c_samp: c.c_samp,
            n_min: n,
            lambda_lo_at_n_min: iv.lo,
            lambda_hi: iv.hi,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyReport {
    pub gamma: f64,
    pub omega_y: f64,
    pub omega_yx: f64,
    pub assumptions: AssumptionSummary,
    pub constants: Option<ConstantsSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub step: f64,
    pub split_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub skipped: usize,
    pub best: CvPoint,
    pub by_rank: Vec<CvPoint>,
    pub model: FactorFile,
}

impl CvReport {
    pub fn new(r: &CvResult, opts: &crate::cv::CvOptions) -> Self {
        Self {
            lambda_min: opts.lambda_min,
            lambda_max: opts.lambda_max,
            step: opts.step,
            split_seed: opts.split_seed,
            n_train: r.split.train.len(),
            n_test: r.split.test.len(),
            skipped: r.skipped,
            best: r.best,
            by_rank: r.by_rank.values().copied().collect(),
            model: FactorFile::new(&r.best_model, r.best.rank),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CovariateStrength {
    pub covariate: String,
    pub strength: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InterpretEntry {
    pub d: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub rank_l_y: usize,
    pub deviation: f64,
    pub strengths: Vec<CovariateStrength>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InterpretReport {
    pub grid_points: usize,
    pub non_converged: usize,
    pub qualifying: usize,
    pub models: Vec<InterpretEntry>,
}

/// Pretty JSON with a trailing newline.
pub fn write_json_to<T: Serialize>(mut w: impl Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| HarnessError::io("<json>", e))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_json_to(std::io::BufWriter::new(f), value)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cofactor_core::population::{generate_synthetic, marginalize_factor};

    #[test]
    fn model_file_round_trips_exactly() {
        let pop = generate_synthetic(6, 3, 1, 2, 10.0, 4).unwrap();
        let file = ModelFile::from_population(&pop);
        let text = serde_json::to_string(&file).unwrap();
        let back: ModelFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, file);
        let pop2 = back.to_population().unwrap();
        assert_eq!(pop2.theta_star, pop.theta_star);
    }

    #[test]
    fn factor_file_round_trips() {
        let pop = generate_synthetic(5, 2, 1, 1, 10.0, 1).unwrap();
        let fm = marginalize_factor(&pop).unwrap();
        let f = FactorFile::new(&fm, 2);
        let back: FactorFile = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back.to_params().unwrap(), fm);
    }

    #[test]
    fn keys_keep_declaration_order() {
        let pop = generate_synthetic(3, 1, 1, 1, 10.0, 0).unwrap();
        let text = serde_json::to_string(&ModelFile::from_population(&pop)).unwrap();
        let keys = ["\"p\"", "\"q\"", "\"k_x\"", "\"k_u\"", "\"a\"", "\"b_u\"", "\"sigma_zeta_u\"", "\"sigma_eps\"", "\"sigma_x\""];
        let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }
}
