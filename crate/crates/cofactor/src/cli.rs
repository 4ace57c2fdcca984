//! The `cofactor` command line.
//!
//! Every subcommand also accepts `--config FILE`, a flat `key = value` file
//! whose keys are the subcommand's long flags. Flags given on the command
//! line override the file. Exit codes: 0 on success, 2 on invalid input,
//! 3 when `--strict` is set and a solve did not converge, 1 on I/O failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use cofactor_core::fisher::{theorem_bounds, verify_assumptions, EstimatorOptions};
use cofactor_core::interpret::{evaluate_candidates, select_models, sweep_grid, SweepGrid};
use cofactor_core::ops::{numerical_rank, DEFAULT_RANK_TOL};
use cofactor_core::population::{
    generate_synthetic, generate_synthetic_with_scale, marginalize_factor, recover_parameters, sample_observations,
    Dataset, FactorModelParams, PopulationModel,
};
use cofactor_core::solver::{kkt_residuals, solve_composite, solve_factor, SolverOptions};

use crate::config::expand_config;
use crate::cv::{cross_validate_factor, CvOptions, TEST_FRACTION};
use crate::error::{invalid, HarnessError, Result};
use crate::experiment::{run_recovery_experiment, ExperimentConfig, Mode};
use crate::fixture::financial_fixture;
use crate::panel::{quarterly_average, Frequency};
use crate::report::{
    read_json, write_json, write_json_to, CertifyReport, CovariateStrength, CvReport, FactorFile, FactorFitReport,
    FitReport, InterpretEntry, InterpretReport, ModelFile,
};
use crate::table::{ingest_csv, write_table, Ingested, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cofactor", version, about = "Composite factor model estimation and interpretation")]
pub struct Cli {
    /// Flat key = value file of default flags for the subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the composite program at one (lambda, gamma).
    FitComposite(FitCompositeArgs),
    /// Fit the factor program over the responses.
    FitFactor(FitFactorArgs),
    /// Sweep (lambda, gamma) and pick interpretable composite models.
    Interpret(InterpretArgs),
    /// Estimate the Fisher-information conditions over sampled tangent spaces.
    Certify(CertifyArgs),
    /// Generate a synthetic model, and optionally samples from it.
    Synth(SynthArgs),
    /// Run the synthetic structure-recovery study.
    RecoverExperiment(RecoverArgs),
    /// Choose a factor model by held-out likelihood.
    Cv(CvArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV table, or monthly panel with a leading `period` column.
    #[arg(long, value_name = "CSV")]
    pub data: Option<PathBuf>,
    /// Number of response columns, which come first.
    #[arg(long)]
    pub p: Option<usize>,
    /// Subtract column means before fitting.
    #[arg(long)]
    pub center: bool,
    /// Model JSON to sample from when --data is absent.
    #[arg(long, value_name = "JSON")]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub sample_seed: u64,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    pub rank_tol: f64,
    /// Exit with code 3 if any solve fails to converge.
    #[arg(long)]
    pub strict: bool,
}

impl SolverArgs {
    fn options(&self, lambda: f64, gamma: f64) -> SolverOptions {
        SolverOptions { max_iters: self.max_iters, rank_tol: self.rank_tol, ..SolverOptions::new(lambda, gamma).with_tolerance(self.tol) }
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct FitCompositeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Report path; standard output when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct FitFactorArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub lambda: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 0.01)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub lambda_max: f64,
    #[arg(long, default_value_t = 25)]
    pub lambda_count: usize,
    #[arg(long, default_value_t = 0.5)]
    pub gamma_min: f64,
    #[arg(long, default_value_t = 4.0)]
    pub gamma_max: f64,
    #[arg(long, default_value_t = 12)]
    pub gamma_count: usize,
}

impl GridArgs {
    fn grid(&self) -> Result<SweepGrid> {
        Ok(SweepGrid::spaced(self.lambda_min, self.lambda_max, self.lambda_count, self.gamma_min, self.gamma_max, self.gamma_count)?)
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct InterpretArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Reference factor model JSON, or a fit-factor/cv report holding one.
    /// The marginal of --model when absent.
    #[arg(long, value_name = "JSON")]
    pub factor: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    pub angle_min: f64,
    #[arg(long, default_value_t = 1)]
    pub d_min: usize,
    /// Defaults to the number of covariates.
    #[arg(long)]
    pub d_max: Option<usize>,
    /// Strengths CSV: one row per covariate, one column per dimension.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, value_name = "JSON")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct CertifyArgs {
    /// Model JSON; otherwise a model is generated from the flags below.
    #[arg(long, value_name = "JSON")]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 60)]
    pub p: usize,
    #[arg(long, default_value_t = 2)]
    pub q: usize,
    #[arg(long, default_value_t = 1)]
    pub kx: usize,
    #[arg(long, default_value_t = 1)]
    pub ku: usize,
    /// Spectral norm of the loadings.
    #[arg(long, default_value_t = 0.2)]
    pub tau: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.2)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.03)]
    pub omega_y: f64,
    #[arg(long, default_value_t = 0.03)]
    pub omega_yx: f64,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 9.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 50)]
    pub families: usize,
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    #[arg(long, default_value_t = 150)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1)]
    pub family_seed: u64,
    #[arg(long, default_value_t = 0)]
    pub estimator_seed: u64,
    #[arg(long, value_name = "JSON")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 40)]
    pub p: usize,
    #[arg(long, default_value_t = 10)]
    pub q: usize,
    #[arg(long, default_value_t = 2)]
    pub kx: usize,
    #[arg(long, default_value_t = 2)]
    pub ku: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest condition number of the joint precision.
    #[arg(long, default_value_t = 10.0)]
    pub cond_bound: f64,
    /// Fixed loading norm instead of the condition-number search.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Use the 45-asset, 13-covariate monthly fixture instead.
    #[arg(long)]
    pub fixture: bool,
    /// Model JSON path; standard output when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write samples (a panel for --fixture).
    #[arg(long, value_name = "CSV")]
    pub data_out: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
}

fn parse_model(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once('x').ok_or_else(|| format!("{s:?} is not KXxKU"))?;
    Ok((a.trim().parse().map_err(|_| format!("bad k_x in {s:?}"))?, b.trim().parse().map_err(|_| format!("bad k_u in {s:?}"))?))
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct RecoverArgs {
    #[arg(long, default_value = "synthetic-recovery")]
    pub mode: Mode,
    #[arg(long, default_value_t = 40)]
    pub p: usize,
    #[arg(long, default_value_t = 10)]
    pub q: usize,
    /// Models as KXxKU, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_model, default_value = "1x1,2x2,4x4,6x6")]
    pub models: Vec<(usize, usize)>,
    #[arg(long, default_value_t = 10.0)]
    pub cond_bound: f64,
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2000,4000,8000")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.02)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 2.0)]
    pub lambda_max: f64,
    #[arg(long, default_value_t = 20)]
    pub lambda_count: usize,
    #[arg(long, default_value_t = 0.5)]
    pub gamma_min: f64,
    #[arg(long, default_value_t = 4.0)]
    pub gamma_max: f64,
    #[arg(long, default_value_t = 8)]
    pub gamma_count: usize,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    pub rank_tol: f64,
    #[arg(long, default_value_t = 5.0)]
    pub angle_min: f64,
    #[arg(long)]
    pub strict: bool,
    /// Directory for recovery.csv, trials.csv and config.json.
    #[arg(short, long)]
    pub output: PathBuf,
}

impl RecoverArgs {
    pub fn config(&self) -> Result<ExperimentConfig> {
        let grid = SweepGrid::spaced(self.lambda_min, self.lambda_max, self.lambda_count, self.gamma_min, self.gamma_max, self.gamma_count)?;
        Ok(ExperimentConfig {
            mode: self.mode,
            p: self.p,
            q: self.q,
            models: self.models.clone(),
            cond_bound: self.cond_bound,
            ns: self.n.clone(),
            trials: self.trials,
            seed: self.seed,
            lambdas: grid.lambdas().to_vec(),
            gammas: grid.gammas().to_vec(),
            rank_tol: self.rank_tol,
            angle_min: self.angle_min,
            data: None,
            output: Some(self.output.clone()),
        })
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0.04)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 4.0)]
    pub lambda_max: f64,
    #[arg(long, default_value_t = 0.004)]
    pub step: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long, default_value_t = TEST_FRACTION)]
    pub test_fraction: f64,
    /// Best held-out log-likelihood per rank, as CSV.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Every point of the path, as CSV.
    #[arg(long, value_name = "CSV")]
    pub path_out: Option<PathBuf>,
    /// Report JSON with the chosen factor model.
    #[arg(long, value_name = "JSON")]
    pub report: Option<PathBuf>,
}

/// Which frequency a panel input is reduced to.
#[derive(Clone, Copy, PartialEq, Eq)]
enum PanelUse {
    /// Quarterly averages of every series.
    Joint,
    /// Monthly responses only.
    Responses,
}

fn load_model(path: &Path) -> Result<PopulationModel> {
    read_json::<ModelFile>(path)?.to_population()
}

impl DataArgs {
    fn load(&self, panel_use: PanelUse) -> Result<(Table, usize)> {
        let (mut table, p) = match (&self.data, &self.model) {
            (Some(path), _) => {
                let table = match ingest_csv(path)? {
                    Ingested::Table(t) => t,
                    Ingested::Panel(panel) => match panel_use {
                        PanelUse::Joint => quarterly_average(&panel)?,
                        PanelUse::Responses => {
                            let p = self.p.ok_or_else(|| HarnessError::Validation("--p is required with --data".into()))?;
                            if p > panel.names.len() || panel.frequency[..p].iter().any(|f| *f != Frequency::Monthly) {
                                invalid!("the first {p} panel series must be monthly responses");
                            }
                            let values = nalgebra::DMatrix::from_fn(panel.len(), p, |i, j| panel.columns[j][i].unwrap_or(f64::NAN));
                            Table::new(panel.names[..p].to_vec(), values)?
                        }
                    },
                };
                let p = self.p.ok_or_else(|| HarnessError::Validation("--p is required with --data".into()))?;
                (table, p)
            }
            (None, Some(model)) => {
                let pop = load_model(model)?;
                (Table::from_dataset(&sample_observations(&pop, self.samples, self.sample_seed)?), pop.p())
            }
            (None, None) => invalid!("give --data or --model"),
        };
        if p == 0 || p > table.names.len() {
            invalid!("--p {p} does not fit {} columns", table.names.len());
        }
        if self.center {
            for mut c in table.values.column_iter_mut() {
                let m = c.mean();
                c.add_scalar_mut(-m);
            }
        }
        Ok((table, p))
    }
}

fn emit_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    match path {
        Some(p) => write_json(p, value),
        None => write_json_to(std::io::stdout().lock(), value),
    }
}

fn csv_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?))
}

fn strict_code(strict: bool, converged: bool) -> i32 {
    if strict && !converged {
        log::error!("solver did not converge");
        EXIT_NOT_CONVERGED
    } else {
        EXIT_OK
    }
}

fn fit_composite(a: &FitCompositeArgs) -> Result<i32> {
    let (table, p) = a.data.load(PanelUse::Joint)?;
    let data = table.to_dataset(p)?;
    if data.q == 0 {
        invalid!("fit-composite needs at least one covariate column");
    }
    let opts = a.solver.options(a.lambda, a.gamma);
    let r = solve_composite(&data, &opts)?;
    let kkt = kkt_residuals(&r.estimate, &data.sample_cov, a.lambda, a.gamma, a.solver.rank_tol)?;
    let rec = recover_parameters(&r.estimate, a.solver.rank_tol)?;
    emit_json(a.output.as_deref(), &FitReport::new(&r, &kkt, a.lambda, a.gamma, data.n(), &rec.a))?;
    Ok(strict_code(a.solver.strict, r.converged))
}

fn fit_factor(a: &FitFactorArgs) -> Result<i32> {
    let (table, p) = a.data.load(PanelUse::Responses)?;
    let data = table.to_dataset(p)?;
    let (fm, r) = solve_factor(&data, a.lambda, &a.solver.options(a.lambda, 1.0))?;
    let report = FactorFitReport {
        lambda: a.lambda,
        n: data.n(),
        converged: r.converged,
        iterations: r.iterations,
        objective: r.objective,
        model: FactorFile::new(&fm, r.rank_l_y),
    };
    emit_json(a.output.as_deref(), &report)?;
    Ok(strict_code(a.solver.strict, r.converged))
}

fn reference_model(a: &InterpretArgs) -> Result<FactorModelParams> {
    match (&a.factor, &a.data.model) {
        (Some(f), _) => {
            // Accepts a bare factor model or a fit/cv report that nests one.
            let mut v: serde_json::Value = read_json(f)?;
            if let Some(inner) = v.get_mut("model") {
                v = inner.take();
            }
            serde_json::from_value::<FactorFile>(v)?.to_params()
        }
        (None, Some(m)) => Ok(marginalize_factor(&load_model(m)?)?),
        (None, None) => invalid!("give --factor, or --model for the oracle factor model"),
    }
}

fn interpret(a: &InterpretArgs) -> Result<i32> {
    let (table, p) = a.data.load(PanelUse::Joint)?;
    let data: Dataset = table.to_dataset(p)?;
    if data.q == 0 {
        invalid!("interpret needs covariate columns");
    }
    let fm = reference_model(a)?;
    let grid = a.grid.grid()?;
    let base = a.solver.options(grid.lambdas()[0], grid.gammas()[0]);
    let mut sweep = sweep_grid(&data, &grid, &base)?;
    evaluate_candidates(&mut sweep.candidates, &fm, a.solver.rank_tol, a.angle_min)?;
    let d_max = a.d_max.unwrap_or(data.q);
    let chosen = select_models(&sweep.candidates, a.d_min..=d_max);
    let covariates = &table.names[p..];

    let mut w = csv::Writer::from_writer(csv_file(&a.output)?);
    w.write_record(std::iter::once("covariate".to_string()).chain(chosen.keys().map(|d| format!("d{d}"))))?;
    for (i, name) in covariates.iter().enumerate() {
        w.write_record(std::iter::once(name.clone()).chain(chosen.values().map(|r| r.strengths[i].to_string())))?;
    }
    w.flush().map_err(|e| HarnessError::io(&a.output, e))?;

    if chosen.is_empty() {
        log::warn!("no candidate met the selection conditions for d in {}..={d_max}", a.d_min);
    }
    let report = InterpretReport {
        grid_points: sweep.candidates.len(),
        non_converged: sweep.non_converged,
        qualifying: sweep.candidates.iter().filter(|c| c.qualifies()).count(),
        models: chosen
            .values()
            .map(|r| InterpretEntry {
                d: r.d,
                lambda: r.chosen.lambda,
                gamma: r.chosen.gamma,
                rank_l_y: r.chosen.rank_l,
                deviation: r.chosen.deviation.unwrap_or(f64::NAN),
                strengths: covariates
                    .iter()
                    .zip(r.strengths.iter())
                    .map(|(c, &s)| CovariateStrength { covariate: c.clone(), strength: s })
                    .collect(),
            })
            .collect(),
    };
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    for m in &report.models {
        println!("d={} lambda={:.4} gamma={:.3} rank(L_y)={} deviation={:.4}", m.d, m.lambda, m.gamma, m.rank_l_y, m.deviation);
    }
    Ok(strict_code(a.solver.strict, sweep.non_converged == 0))
}

fn pass(b: bool) -> &'static str {
    if b {
        "PASS"
    } else {
        "FAIL"
    }
}

fn certify(a: &CertifyArgs) -> Result<i32> {
    let pop = match &a.model {
        Some(path) => load_model(path)?,
        None => generate_synthetic_with_scale(a.p, a.q, a.kx, a.ku, a.tau, a.seed)?,
    };
    let opts = EstimatorOptions { restarts: a.restarts, iterations: a.iterations, seed: a.estimator_seed, ..Default::default() };
    let r = verify_assumptions(&pop, a.gamma, a.omega_y, a.omega_yx, a.alpha, a.beta, a.families, a.family_seed, &opts)?;
    let constants = theorem_bounds(&pop, a.alpha, a.beta, a.gamma, a.omega_y, a.omega_yx, pop.p(), pop.q())
        .map_err(|e| log::warn!("constants unavailable: {e}"))
        .ok();
    let varphi_req = 1.0 - 2.0 / (a.beta + 1.0);
    println!("{:<8} {:>10} {:>14}  status", "quantity", "estimate", "requirement");
    println!("{:<8} {:>10.4} {:>14}  {}", "chi", r.chi_min, format!(">= {}", a.alpha), pass(r.pass_chi));
    println!("{:<8} {:>10.4} {:>14}  {}", "xi", r.xi_min, "> 0", pass(r.pass_xi));
    println!("{:<8} {:>10.4} {:>14}  {}", "varphi", r.varphi_max, format!("<= {varphi_req:.4}"), pass(r.pass_varphi));
    println!("families {}, max tangent angle {:.3} deg", r.families, r.max_angle);
    let report = CertifyReport {
        gamma: a.gamma,
        omega_y: a.omega_y,
        omega_yx: a.omega_yx,
        assumptions: (&r).into(),
        constants: constants.as_ref().map(Into::into),
    };
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    Ok(EXIT_OK)
}

fn synth(a: &SynthArgs) -> Result<i32> {
    if a.fixture {
        let panel = financial_fixture(a.seed)?;
        if let Some(path) = &a.data_out {
            panel.write(path)?;
        }
        emit_json(a.output.as_deref(), &ModelFile::from_population(&crate::fixture::fixture_population(a.seed)?))?;
        return Ok(EXIT_OK);
    }
    let pop = match a.tau {
        Some(tau) => generate_synthetic_with_scale(a.p, a.q, a.kx, a.ku, tau, a.seed)?,
        None => generate_synthetic(a.p, a.q, a.kx, a.ku, a.cond_bound, a.seed)?,
    };
    if let Some(path) = &a.data_out {
        let data = sample_observations(&pop, a.samples, a.seed.wrapping_add(1))?;
        write_table(path, &Table::from_dataset(&data))?;
    }
    emit_json(a.output.as_deref(), &ModelFile::from_population(&pop))?;
    Ok(EXIT_OK)
}

fn recover(a: &RecoverArgs) -> Result<i32> {
    let cfg = a.config()?;
    cfg.validate()?;
    std::fs::create_dir_all(&a.output).map_err(|e| HarnessError::io(&a.output, e))?;
    write_json(a.output.join("config.json"), &cfg)?;
    let r = run_recovery_experiment(&cfg)?;
    r.write_summary(csv_file(&a.output.join("recovery.csv"))?)?;
    r.write_trials(csv_file(&a.output.join("trials.csv"))?)?;
    r.write_summary(std::io::stdout().lock())?;
    let non_converged: usize = r.trials.iter().map(|t| t.non_converged).sum();
    Ok(strict_code(a.strict, non_converged == 0))
}

fn cv(a: &CvArgs) -> Result<i32> {
    let (table, p) = a.data.load(PanelUse::Responses)?;
    let data = table.to_dataset(p)?;
    let opts = CvOptions {
        lambda_min: a.lambda_min,
        lambda_max: a.lambda_max,
        step: a.step,
        split_seed: a.split_seed,
        test_fraction: a.test_fraction,
        solver: a.solver.options(a.lambda_min, 1.0),
    };
    let r = cross_validate_factor(&data, &opts)?;
    let rank_check = numerical_rank(&r.best_model.l, a.solver.rank_tol);
    log::debug!("best model rank {} (recomputed {rank_check})", r.best.rank);
    let write_points = |path: &Path, points: &mut dyn Iterator<Item = &crate::cv::CvPoint>| -> Result<()> {
        let mut w = csv::Writer::from_writer(csv_file(path)?);
        w.write_record(["rank", "lambda", "test_log_likelihood", "converged"])?;
        for pt in points {
            w.write_record([pt.rank.to_string(), pt.lambda.to_string(), pt.test_log_likelihood.to_string(), pt.converged.to_string()])?;
        }
        w.flush().map_err(|e| HarnessError::io(path, e))?;
        Ok(())
    };
    if let Some(path) = &a.output {
        write_points(path, &mut r.by_rank.values())?;
    }
    if let Some(path) = &a.path_out {
        write_points(path, &mut r.points.iter())?;
    }
    if let Some(path) = &a.report {
        write_json(path, &CvReport::new(&r, &opts))?;
    }
    println!("{:>5} {:>10} {:>14}", "rank", "lambda", "test loglik");
    for pt in r.by_rank.values() {
        let mark = if pt.lambda == r.best.lambda { " *" } else { "" };
        println!("{:>5} {:>10.4} {:>14.6}{mark}", pt.rank, pt.lambda, pt.test_log_likelihood);
    }
    Ok(strict_code(a.solver.strict, r.points.iter().all(|p| p.converged)))
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::FitComposite(a) => fit_composite(a),
        Command::FitFactor(a) => fit_factor(a),
        Command::Interpret(a) => interpret(a),
        Command::Certify(a) => certify(a),
        Command::Synth(a) => synth(a),
        Command::RecoverExperiment(a) => recover(a),
        Command::Cv(a) => cv(a),
    }
}

/// Runs the command line and returns the process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let argv = match expand_config(argv) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_env("COFACTOR_LOG").try_init();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.exit_code() == EXIT_USAGE {
                eprintln!("run `cofactor help` for usage");
            }
            e.exit_code()
        }
    }
}

