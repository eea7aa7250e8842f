//! ε-convergence rate and control sparsity studies.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiments::{solve_with, sparsity_fraction, with_threads};
use crate::error::{OcpError, Result};
use crate::grid::{Field, Grid};
use crate::smoothing::SmoothingParam;
use crate::system::{
    construct_test_problem, recover_control, sparsity_problem, AdjointProfile, StatePair,
    TestProblemParams,
};

/// Discrete `H¹₀` norm of a grid field: `h²Σ v² + h²Σ |∇⁺v|²`, with forward
/// differences reaching into the zero boundary.
pub fn h1_norm(grid: &Grid, v: &[f64]) -> f64 {
    let n = grid.n() as isize;
    let h = grid.h();
    let at = |r: isize, c: isize| {
        if (0..n).contains(&r) && (0..n).contains(&c) {
            v[grid.index(r as usize, c as usize)]
        } else {
            0.0
        }
    };
    let l2: f64 = v.iter().map(|x| x * x).sum();
    let mut grad = 0.0;
    for a in 0..n {
        for b in 0..=n {
            let dx = at(a, b) - at(a, b - 1);
            let dy = at(b, a) - at(b - 1, a);
            grad += dx * dx + dy * dy;
        }
    }
    (h * h * l2 + grad).sqrt()
}

/// `H¹₀(Ω)²` distance between two `(y, p)` pairs.
pub fn pair_h1_distance(a: &StatePair, b: &StatePair) -> f64 {
    let grid = *a.grid();
    let d: Vec<f64> = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x - y)
        .collect();
    let (dy, dp) = d.split_at(grid.len());
    (h1_norm(&grid, dy).powi(2) + h1_norm(&grid, dp).powi(2)).sqrt()
}

/// Least-squares slope of `log err` against `log ε`, skipping zero errors.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(e, err)| *e > 0.0 && *err > 0.0)
        .map(|(e, err)| (e.ln(), err.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

pub const RATE_EPS_REF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub eps: f64,
    pub h1_error: f64,
    pub outer_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudy {
    pub n: usize,
    pub nu: f64,
    pub mu: f64,
    pub eps_ref: f64,
    pub points: Vec<RatePoint>,
    pub slope: Option<f64>,
}

/// Solves the plateau configuration at every ε of `eps_list` and measures the
/// `H¹` distance to the pair constructed to solve the system at `eps_ref`.
pub fn rate_study(cfg: &ExperimentConfig, eps_list: &[f64], eps_ref: f64) -> Result<RateStudy> {
    cfg.validate()?;
    let grid = Grid::new(cfg.n)?;
    let params = TestProblemParams {
        kappa: cfg.kappa,
        nu: cfg.nu,
        mu: cfg.mu,
        profile: AdjointProfile::Plateau,
        eps_construct: eps_ref,
    };
    let tp = construct_test_problem(grid, &params)?;
    let points = with_threads(cfg.threads, || {
        eps_list
            .iter()
            .map(|&eps| {
                if eps == eps_ref {
                    return Ok(RatePoint {
                        eps,
                        h1_error: 0.0,
                        outer_iters: 0,
                    });
                }
                let mut c = cfg.clone();
                c.eps_min = eps;
                c.eps0 = c.eps0.max(eps);
                let (x, rep) = solve_with(&tp.problem, &c, vec![0.0; tp.problem.dim()])?;
                if !rep.converged {
                    return Err(OcpError::NewtonFailed(format!(
                        "rate study solve at eps={eps}: {:?}",
                        rep.status
                    )));
                }
                let sol = StatePair::from_vec(grid, x)?;
                Ok(RatePoint {
                    eps,
                    h1_error: pair_h1_distance(&sol, &tp.reference),
                    outer_iters: rep.outer_iters,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let slope = loglog_slope(
        &points
            .iter()
            .map(|p| (p.eps, p.h1_error))
            .collect::<Vec<_>>(),
    );
    Ok(RateStudy {
        n: cfg.n,
        nu: cfg.nu,
        mu: cfg.mu,
        eps_ref,
        points,
        slope,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityRow {
    pub mu: f64,
    pub eps: f64,
    pub sparsity_fraction: f64,
    pub control_max: f64,
    pub outer_iters: usize,
}

/// Solves the sparsity configuration for every `(μ, ε)` and reports the share
/// of vanishing control entries; controls are dumped into `dump_dir` if given.
pub fn sparsity_study(
    cfg: &ExperimentConfig,
    mu_list: &[f64],
    eps_list: &[f64],
    dump_dir: Option<&Path>,
) -> Result<Vec<SparsityRow>> {
    cfg.validate()?;
    let grid = Grid::new(cfg.n)?;
    if let Some(dir) = dump_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut rows = Vec::new();
    for &mu in mu_list {
        let problem = sparsity_problem(grid, cfg.kappa, cfg.nu, mu)?;
        for &eps in eps_list {
            let mut c = cfg.clone();
            c.mu = mu;
            c.eps_min = eps;
            c.eps0 = c.eps0.max(eps);
            c.validate()?;
            let (x, rep) = with_threads(c.threads, || {
                solve_with(&problem, &c, vec![0.0; problem.dim()])
            })??;
            if !rep.converged {
                return Err(OcpError::NewtonFailed(format!(
                    "sparsity study solve at mu={mu}, eps={eps}: {:?}",
                    rep.status
                )));
            }
            let p = Field::new(grid, x[grid.len()..].to_vec())?;
            let u = recover_control(&p, &problem, SmoothingParam::new(eps)?);
            if let Some(dir) = dump_dir {
                let file = std::fs::File::create(dir.join(format!("u_mu{mu:e}_eps{eps:e}.csv")))?;
                u.write_csv(std::io::BufWriter::new(file))?;
            }
            rows.push(SparsityRow {
                mu,
                eps,
                sparsity_fraction: sparsity_fraction(u.values()),
                control_max: u.max_abs(),
                outer_iters: rep.outer_iters,
            });
        }
    }
    Ok(rows)
}
