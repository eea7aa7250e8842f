use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Layout, LinearMode, Method};
use crate::error::{OcpError, Result};
use crate::grid::{Field, Grid};
use crate::krylov::KrylovConfig;
use crate::linalg::{max_abs_diff, norm2};
use crate::newton::{
    newton_continuation, ContinuationSchedule, LinearSolver, NewtonConfig, SolveReport,
};
use crate::schwarz::{decompose, raspen_solve, InnerSolve, RasFactory, RaspenConfig};
use crate::smoothing::SmoothingParam;
use crate::system::{
    construct_test_problem, recover_control, residual_into, AdjointProfile, MonolithicSystem,
    Problem, StatePair, TestProblemParams,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Relative threshold below which a control entry counts as zero.
pub const SPARSITY_THRESHOLD: f64 = 1e-8;

/// Share of entries with `|u| < 1e-8·‖u‖_∞` (1 for the zero control).
pub fn sparsity_fraction(u: &[f64]) -> f64 {
    let max = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return 1.0;
    }
    let zeros = u
        .iter()
        .filter(|v| v.abs() < SPARSITY_THRESHOLD * max)
        .count();
    zeros as f64 / u.len() as f64
}

/// Runs `f` on a pool with `threads` workers (0 = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| OcpError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn krylov_config(cfg: &ExperimentConfig) -> KrylovConfig {
    KrylovConfig {
        rel_tol: cfg.gmres_tol,
        max_iters: cfg.gmres_max_iters,
        ..KrylovConfig::default()
    }
}

fn schedule(cfg: &ExperimentConfig, continuation: bool) -> Result<ContinuationSchedule> {
    if continuation {
        ContinuationSchedule::new(cfg.eps0, cfg.eps_min, cfg.gamma)
    } else {
        ContinuationSchedule::fixed(cfg.eps_min)
    }
}

/// Solves `problem` from `x0` with the method, schedule and tolerances of `cfg`.
pub fn solve_with(
    problem: &Problem,
    cfg: &ExperimentConfig,
    x0: Vec<f64>,
) -> Result<(Vec<f64>, SolveReport)> {
    let method = cfg.method;
    let sched = schedule(cfg, method.uses_continuation())?;
    let layout = cfg.layout();
    if method.is_raspen() {
        let dec = decompose(problem.grid(), layout.rows, layout.cols, cfg.overlap)?;
        let first = InnerSolve {
            cfg: NewtonConfig {
                tol: cfg.inner_tol,
                sigma: cfg.sigma,
                max_outer: cfg.max_outer,
                ..NewtonConfig::direct()
            },
            sched,
        };
        let rcfg = RaspenConfig {
            tol: cfg.tol,
            krylov: krylov_config(cfg),
            ..RaspenConfig::default()
        };
        return raspen_solve(problem, &dec, x0, &first, &rcfg);
    }
    let ncfg = NewtonConfig {
        tol: cfg.tol,
        sigma: cfg.sigma,
        max_outer: cfg.max_outer,
        linear_solver: match cfg.linear {
            LinearMode::Gmres => LinearSolver::Gmres(krylov_config(cfg)),
            LinearMode::Direct => LinearSolver::Direct,
        },
        ..NewtonConfig::default()
    };
    let system = MonolithicSystem::new(problem);
    let out = if method.uses_decomposition() {
        let dec = decompose(problem.grid(), layout.rows, layout.cols, cfg.overlap)?;
        let factory = RasFactory { problem, dec: &dec };
        let mut out = newton_continuation(&system, x0, &sched, &ncfg, Some(&factory))?;
        out.report.decomposition = Some(dec.summary());
        out
    } else {
        newton_continuation(&system, x0, &sched, &ncfg, None)?
    };
    Ok((out.x, out.report))
}

pub fn test_problem_params(cfg: &ExperimentConfig) -> TestProblemParams {
    TestProblemParams {
        kappa: cfg.kappa,
        nu: cfg.nu,
        mu: cfg.mu,
        profile: AdjointProfile::Oscillating {
            k_tilde: cfg.k_tilde,
        },
        eps_construct: cfg.eps_construct,
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: ExperimentConfig,
    pub problem: Problem,
    pub reference: StatePair,
    pub solution: StatePair,
    pub report: SolveReport,
}

impl RunOutcome {
    pub fn control(&self) -> Field {
        let eps = SmoothingParam::new(self.config.eps_min).expect("validated eps");
        recover_control(&self.solution.p_field(), &self.problem, eps)
    }
}

/// Builds the manufactured problem of `cfg` and solves it from zero.
pub fn run_single(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let grid = Grid::new(cfg.n)?;
    let tp = construct_test_problem(grid, &test_problem_params(cfg))?;
    let (x, report) = with_threads(cfg.threads, || {
        solve_with(&tp.problem, cfg, vec![0.0; tp.problem.dim()])
    })??;
    Ok(RunOutcome {
        config: cfg.clone(),
        solution: StatePair::from_vec(grid, x)?,
        problem: tp.problem,
        reference: tp.reference,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub method: Method,
    pub config: ExperimentConfig,
    pub report: SolveReport,
    /// `‖F_{ε_min}(x)‖` recomputed at the returned iterate.
    pub final_residual: f64,
    /// Sup-norm distance of the state to the manufactured state.
    pub state_error_sup: f64,
    pub adjoint_error_sup: f64,
    pub control_sparsity: f64,
}

pub fn report_file(out: &RunOutcome) -> Result<ReportFile> {
    let mut r = vec![0.0; out.problem.dim()];
    residual_into(
        &out.problem,
        out.solution.as_slice(),
        out.config.eps_min,
        &mut r,
    )?;
    Ok(ReportFile {
        schema_version: SCHEMA_VERSION,
        method: out.config.method,
        config: out.config.clone(),
        report: out.report.clone(),
        final_residual: norm2(&r),
        state_error_sup: max_abs_diff(out.solution.y(), out.reference.y()),
        adjoint_error_sup: max_abs_diff(out.solution.p(), out.reference.p()),
        control_sparsity: sparsity_fraction(out.control().values()),
    })
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub eps: f64,
    pub residual: f64,
    pub alpha: Option<f64>,
    pub gmres_iters: Option<usize>,
}

pub fn history_rows(report: &SolveReport) -> Vec<HistoryRow> {
    (0..report.residual_history.len())
        .map(|k| HistoryRow {
            iteration: k,
            eps: report.eps_history[k],
            residual: report.residual_history[k],
            alpha: k.checked_sub(1).and_then(|j| report.alphas.get(j).copied()),
            gmres_iters: k
                .checked_sub(1)
                .and_then(|j| report.gmres_iters.get(j).copied()),
        })
        .collect()
}

pub fn write_history_csv(report: &SolveReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in history_rows(report) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_field(field: &Field, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    field.write_csv(std::io::BufWriter::new(file))
}

/// Writes `report.json`, `residual_history.csv`, `y.csv`, `p.csv`, `u.csv`.
pub fn write_artifacts(out: &RunOutcome, dir: &Path) -> Result<ReportFile> {
    fs::create_dir_all(dir)?;
    let rf = report_file(out)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&rf)?)?;
    write_history_csv(&out.report, &dir.join("residual_history.csv"))?;
    write_field(&out.solution.y_field(), &dir.join("y.csv"))?;
    write_field(&out.solution.p_field(), &dir.join("p.csv"))?;
    write_field(&out.control(), &dir.join("u.csv"))?;
    Ok(rf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableId {
    Mono,
    Gmres,
    Raspen,
    Scaling,
    Sweep,
}

impl std::str::FromStr for TableId {
    type Err = OcpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mono" => Ok(TableId::Mono),
            "gmres" => Ok(TableId::Gmres),
            "raspen" => Ok(TableId::Raspen),
            "scaling" => Ok(TableId::Scaling),
            "sweep" => Ok(TableId::Sweep),
            _ => Err(OcpError::Config(format!("unknown table '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub method: Method,
    pub n: usize,
    pub subdomains: String,
    pub eps_min: f64,
    pub eps0: f64,
    pub gamma: f64,
    pub nu: f64,
    pub mu: f64,
    pub outer_iters: Option<usize>,
    pub avg_inner: Option<f64>,
    pub avg_gmres: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

impl BenchmarkRow {
    fn from_run(cfg: &ExperimentConfig, result: Result<SolveReport>) -> Self {
        let subdomains = if cfg.method.uses_decomposition() {
            cfg.layout().to_string()
        } else {
            String::new()
        };
        let mut row = BenchmarkRow {
            method: cfg.method,
            n: cfg.n,
            subdomains,
            eps_min: cfg.eps_min,
            eps0: cfg.eps0,
            gamma: cfg.gamma,
            nu: cfg.nu,
            mu: cfg.mu,
            outer_iters: None,
            avg_inner: None,
            avg_gmres: None,
            wall_time_s: None,
            converged: false,
            error: None,
        };
        match result {
            Ok(rep) => {
                row.outer_iters = Some(rep.outer_iters);
                row.avg_inner = rep.avg_inner();
                row.avg_gmres = Some(rep.avg_gmres());
                row.wall_time_s = Some(rep.wall_time_s);
                row.converged = rep.converged;
                if !rep.converged {
                    row.error = Some(format!("{:?}", rep.status));
                }
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    }
}

pub const MONO_EPS: [f64; 6] = [1.0, 1e-3, 1e-5, 1e-10, 1e-13, 1e-15];
pub const RASPEN_EPS: [f64; 4] = [1.0, 1e-5, 1e-10, 1e-15];

/// The cells of a table as configurations derived from `base`.
pub fn table_cells(table: TableId, base: &ExperimentConfig) -> Vec<ExperimentConfig> {
    let mut cells = Vec::new();
    let with = |method: Method, eps_min: f64, layout: Option<Layout>| {
        let mut c = base.clone();
        c.method = method;
        c.eps_min = eps_min;
        c.eps0 = c.eps0.max(eps_min);
        if let Some(l) = layout {
            c.subdomains = vec![l];
        }
        c
    };
    match table {
        TableId::Mono => {
            for m in [Method::Newton, Method::NewtonEps] {
                for e in MONO_EPS {
                    cells.push(with(m, e, None));
                }
            }
        }
        TableId::Gmres => {
            for m in [
                Method::Newton,
                Method::NewtonEps,
                Method::NewtonRas,
                Method::NewtonRasEps,
            ] {
                for e in MONO_EPS {
                    cells.push(with(m, e, None));
                }
            }
        }
        TableId::Raspen => {
            for &l in &base.subdomains {
                for m in [Method::Raspen, Method::RaspenEps] {
                    for e in RASPEN_EPS {
                        cells.push(with(m, e, Some(l)));
                    }
                }
            }
        }
        TableId::Scaling => {
            // fixed tile size `base.n` per subdomain, s × s subdomains
            for s in 1..=4 {
                for m in [
                    Method::RaspenEps,
                    Method::Raspen,
                    Method::NewtonRasEps,
                    Method::NewtonRas,
                ] {
                    let mut c = with(m, 1e-15, Some(Layout { rows: s, cols: s }));
                    c.n = base.n * s;
                    cells.push(c);
                }
            }
        }
        TableId::Sweep => {
            for (nu, mu) in [(1e-8, 1.0), (1e-8, 1e-4), (1e-4, 1.0)] {
                for rate in [2.0, 5.0, 10.0] {
                    for eps0 in [1.0, 1e-3, 1e-5] {
                        for m in [
                            Method::RaspenEps,
                            Method::Raspen,
                            Method::NewtonRasEps,
                            Method::NewtonRas,
                        ] {
                            let mut c = with(m, 1e-15, None);
                            c.nu = nu;
                            c.mu = mu;
                            c.gamma = 1.0 / rate;
                            c.eps0 = eps0;
                            cells.push(c);
                        }
                    }
                }
            }
        }
    }
    cells
}

/// Runs every cell of `table`; failures are recorded in their row. Cells run
/// one after another unless `parallel_cells` is set, which skews timings.
pub fn run_table(
    table: TableId,
    base: &ExperimentConfig,
    parallel_cells: bool,
) -> Result<Vec<BenchmarkRow>> {
    base.validate()?;
    let cells = table_cells(table, base);
    let run =
        |cell: &ExperimentConfig| BenchmarkRow::from_run(cell, run_single(cell).map(|o| o.report));
    if parallel_cells {
        use rayon::prelude::*;
        with_threads(base.threads, || cells.par_iter().map(run).collect())
    } else {
        Ok(cells.iter().map(run).collect())
    }
}

pub fn write_rows_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparsity_fraction_counts_relative_zeros() {
        assert_eq!(sparsity_fraction(&[0.0, 0.0]), 1.0);
        assert_eq!(sparsity_fraction(&[1.0, 1e-9, 0.0, -2.0]), 0.5);
    }

    #[test]
    fn table_cell_counts() {
        let base = ExperimentConfig::default();
        assert_eq!(table_cells(TableId::Mono, &base).len(), 12);
        assert_eq!(table_cells(TableId::Gmres, &base).len(), 24);
        assert_eq!(table_cells(TableId::Raspen, &base).len(), 8);
        assert_eq!(table_cells(TableId::Scaling, &base).len(), 16);
        let sweep = table_cells(TableId::Sweep, &base);
        assert_eq!(sweep.len(), 108);
        assert!(sweep.iter().all(|c| c.validate().is_ok()));
        assert!(sweep.iter().any(|c| c.gamma == 0.1));
    }

    #[test]
    fn history_rows_align_with_report() {
        let cfg = ExperimentConfig {
            n: 8,
            nu: 1e-2,
            k_tilde: 1.0,
            eps_min: 1e-4,
            linear: LinearMode::Direct,
            ..ExperimentConfig::default()
        };
        let out = run_single(&cfg).unwrap();
        let rows = history_rows(&out.report);
        assert_eq!(rows.len(), out.report.outer_iters + 1);
        assert!(rows[0].alpha.is_none());
        assert_eq!(rows[1].alpha, Some(out.report.alphas[0]));
    }
}
