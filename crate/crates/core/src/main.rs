use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ocp_core::harness::{
    rate_study, run_single, run_table, sparsity_study, write_artifacts, write_rows_csv,
    ExperimentConfig, RateStudy, TableId, RATE_EPS_REF,
};
use ocp_core::OcpError;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "ocp",
    version,
    about = "Sparse semilinear elliptic optimal control solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the manufactured test problem once and write artifacts.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Run a benchmark table (mono, gmres, raspen, scaling, sweep).
    Table {
        table: String,
        #[command(flatten)]
        common: Common,
        /// Run cells concurrently; wall times become unreliable.
        #[arg(long)]
        parallel_cells: bool,
    },
    /// Measure the distance to the limit solution as ε shrinks.
    Rate {
        #[command(flatten)]
        common: Common,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "1e-1,1e-2,1e-3,1e-4,1e-5,1e-6"
        )]
        eps_list: Vec<f64>,
        #[arg(long, default_value_t = RATE_EPS_REF)]
        eps_ref: f64,
    },
    /// Control sparsity for a grid of (μ, ε).
    Sparsity {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1e-5,1e-4,1e-3")]
        mu_list: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,1e-2,1e-3,1e-11")]
        eps_list: Vec<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    subdomains: Option<String>,
    #[arg(long)]
    overlap: Option<String>,
    #[arg(long)]
    eps0: Option<String>,
    #[arg(long)]
    eps_min: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    inner_tol: Option<String>,
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    k_tilde: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    linear: Option<String>,
    #[arg(long)]
    gmres_tol: Option<String>,
    #[arg(long)]
    gmres_max_iters: Option<String>,
    #[arg(long)]
    max_outer: Option<String>,
    #[arg(long)]
    eps_construct: Option<String>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, OcpError> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| OcpError::Config(format!("{}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        let flags = [
            ("n", &self.n),
            ("method", &self.method),
            ("subdomains", &self.subdomains),
            ("overlap", &self.overlap),
            ("eps0", &self.eps0),
            ("eps_min", &self.eps_min),
            ("gamma", &self.gamma),
            ("sigma", &self.sigma),
            ("tol", &self.tol),
            ("inner_tol", &self.inner_tol),
            ("kappa", &self.kappa),
            ("nu", &self.nu),
            ("mu", &self.mu),
            ("k_tilde", &self.k_tilde),
            ("threads", &self.threads),
            ("seed", &self.seed),
            ("linear", &self.linear),
            ("gmres_tol", &self.gmres_tol),
            ("gmres_max_iters", &self.gmres_max_iters),
            ("max_outer", &self.max_outer),
            ("eps_construct", &self.eps_construct),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn fail(err: OcpError) -> ExitCode {
    eprintln!("error: {err}");
    match err {
        OcpError::Config(_) | OcpError::InvalidArgument(_) => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::from(EXIT_SOLVER),
    }
}

fn create_out(dir: &Path) -> Result<(), OcpError> {
    std::fs::create_dir_all(dir).map_err(OcpError::from)
}

fn solve(common: &Common) -> Result<ExitCode, OcpError> {
    let cfg = common.config()?;
    let out = run_single(&cfg)?;
    let rf = write_artifacts(&out, &common.out)?;
    let rep = &rf.report;
    println!(
        "{} n={} converged={} outer={} avg_gmres={:.1} residual={:.3e} time={:.2}s",
        cfg.method,
        cfg.n,
        rep.converged,
        rep.outer_iters,
        rep.avg_gmres(),
        rf.final_residual,
        rep.wall_time_s
    );
    if rep.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("solver did not converge: {:?}", rep.status);
        Ok(ExitCode::from(EXIT_SOLVER))
    }
}

fn table(common: &Common, name: &str, parallel: bool) -> Result<ExitCode, OcpError> {
    let id: TableId = name.parse()?;
    let cfg = common.config()?;
    let rows = run_table(id, &cfg, parallel)?;
    create_out(&common.out)?;
    let path = common.out.join(format!("table_{name}.csv"));
    write_rows_csv(&rows, &path)?;
    let failed = rows.iter().filter(|r| !r.converged).count();
    for r in &rows {
        println!(
            "{:<15} n={:<4} {:<5} eps_min={:<8e} outer={:<5} inner={:<6} gmres={:<8} ok={}",
            r.method.name(),
            r.n,
            r.subdomains,
            r.eps_min,
            r.outer_iters.map_or("-".into(), |v| v.to_string()),
            r.avg_inner.map_or("-".into(), |v| format!("{v:.1}")),
            r.avg_gmres.map_or("-".into(), |v| format!("{v:.1}")),
            r.converged
        );
    }
    println!("wrote {}", path.display());
    if failed > 0 {
        eprintln!("{failed} of {} cells failed", rows.len());
        return Ok(ExitCode::from(EXIT_PARTIAL));
    }
    Ok(ExitCode::SUCCESS)
}

fn rate(common: &Common, eps_list: &[f64], eps_ref: f64) -> Result<ExitCode, OcpError> {
    let cfg = common.config()?;
    let study: RateStudy = rate_study(&cfg, eps_list, eps_ref)?;
    create_out(&common.out)?;
    write_rows_csv(&study.points, &common.out.join("rate.csv"))?;
    std::fs::write(
        common.out.join("rate.json"),
        serde_json::to_string_pretty(&study)?,
    )?;
    for p in &study.points {
        println!(
            "eps={:<8e} h1_error={:.6e} outer={}",
            p.eps, p.h1_error, p.outer_iters
        );
    }
    match study.slope {
        Some(s) => println!("slope={s:.4}"),
        None => println!("slope=undefined"),
    }
    Ok(ExitCode::SUCCESS)
}

fn sparsity(common: &Common, mu_list: &[f64], eps_list: &[f64]) -> Result<ExitCode, OcpError> {
    let cfg = common.config()?;
    let rows = sparsity_study(&cfg, mu_list, eps_list, Some(&common.out.join("controls")))?;
    write_rows_csv(&rows, &common.out.join("sparsity.csv"))?;
    for r in &rows {
        println!(
            "mu={:<8e} eps={:<8e} sparsity={:.4} max|u|={:.4e}",
            r.mu, r.eps, r.sparsity_fraction, r.control_max
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve { common } => solve(common),
        Command::Table {
            table: name,
            common,
            parallel_cells,
        } => table(common, name, *parallel_cells),
        Command::Rate {
            common,
            eps_list,
            eps_ref,
        } => rate(common, eps_list, *eps_ref),
        Command::Sparsity {
            common,
            mu_list,
            eps_list,
        } => sparsity(common, mu_list, eps_list),
    };
    result.unwrap_or_else(fail)
}
