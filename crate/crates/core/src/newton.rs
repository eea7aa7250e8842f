//! Damped Newton with relaxed backtracking and ε-continuation.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{OcpError, Result};
use crate::krylov::{gmres, FnOperator, KrylovConfig, LinearOperator};
use crate::linalg::{norm2, PermutedLu};
use crate::schwarz::DecompositionSummary;

/// A square nonlinear system `F_ε(x) = 0` with its Jacobian action.
pub trait NonlinearProblem: Sync {
    fn dim(&self) -> usize;
    fn residual(&self, x: &[f64], eps: f64, out: &mut [f64]) -> Result<()>;
    fn jacobian_apply(&self, x: &[f64], eps: f64, d: &[f64], out: &mut [f64]) -> Result<()>;

    /// Factorised Jacobian for direct linear solves.
    fn factor_jacobian(&self, _x: &[f64], _eps: f64) -> Result<PermutedLu> {
        Err(OcpError::InvalidArgument(
            "this problem does not provide an assembled Jacobian".into(),
        ))
    }
}

/// Builds a left preconditioner for the Jacobian at `(x, ε)`.
pub trait PreconditionerFactory: Sync {
    fn build<'a>(&'a self, x: &[f64], eps: f64) -> Result<Box<dyn LinearOperator + 'a>>;
}

/// `ε_{k+1} = max{γ ε_k, ε_min}` starting from `ε_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationSchedule {
    pub eps0: f64,
    pub eps_min: f64,
    pub gamma: f64,
}

impl ContinuationSchedule {
    pub fn new(eps0: f64, eps_min: f64, gamma: f64) -> Result<Self> {
        if !(eps_min > 0.0) || !(eps0 >= eps_min) || !eps0.is_finite() {
            return Err(OcpError::InvalidArgument(format!(
                "continuation needs eps0 >= eps_min > 0, got eps0={eps0}, eps_min={eps_min}"
            )));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(OcpError::InvalidArgument(format!(
                "continuation rate must lie in (0, 1], got {gamma}"
            )));
        }
        Ok(ContinuationSchedule {
            eps0,
            eps_min,
            gamma,
        })
    }

    /// No continuation: every iteration runs at `eps`.
    pub fn fixed(eps: f64) -> Result<Self> {
        Self::new(eps, eps, 1.0)
    }

    pub fn is_degenerate(&self) -> bool {
        self.eps0 == self.eps_min
    }

    pub fn next(&self, eps: f64) -> f64 {
        (self.gamma * eps).max(self.eps_min)
    }

    /// ε after `k` updates.
    pub fn after(&self, k: usize) -> f64 {
        (0..k).fold(self.eps0, |e, _| self.next(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinearSolver {
    Gmres(KrylovConfig),
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_outer: usize,
    pub sigma: f64,
    pub max_halvings: usize,
    pub linear_solver: LinearSolver,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol: 1e-10,
            max_outer: 200,
            sigma: 1.1,
            max_halvings: 30,
            linear_solver: LinearSolver::Gmres(KrylovConfig::default()),
        }
    }
}

impl NewtonConfig {
    pub fn direct() -> Self {
        NewtonConfig {
            linear_solver: LinearSolver::Direct,
            ..NewtonConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(OcpError::InvalidArgument(
                "tolerance must be positive".into(),
            ));
        }
        if !(self.sigma >= 1.0) {
            return Err(OcpError::InvalidArgument(format!(
                "backtracking relaxation must be >= 1, got {}",
                self.sigma
            )));
        }
        if let LinearSolver::Gmres(k) = &self.linear_solver {
            k.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxOuterIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub converged: bool,
    pub outer_iters: usize,
    /// `‖F_{ε_k}(x^k)‖` for `k = 0..=outer_iters`.
    pub residual_history: Vec<f64>,
    /// `ε_k` for `k = 0..=outer_iters`.
    pub eps_history: Vec<f64>,
    /// Accepted step length of every outer iteration.
    pub alphas: Vec<f64>,
    /// Krylov iterations of every outer iteration (0 for direct solves).
    pub gmres_iters: Vec<usize>,
    /// Outer iterations whose Krylov solve stopped at its iteration cap.
    pub gmres_unconverged: usize,
    pub total_linear_iters: usize,
    pub threshold: f64,
    pub wall_time_s: f64,
    /// Per residual evaluation, the largest inner Newton count over subdomains.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inner_iters: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl SolveReport {
    fn start(r0: f64, eps0: f64, threshold: f64) -> Self {
        SolveReport {
            status: SolveStatus::MaxOuterIterations,
            converged: false,
            outer_iters: 0,
            residual_history: vec![r0],
            eps_history: vec![eps0],
            alphas: Vec::new(),
            gmres_iters: Vec::new(),
            gmres_unconverged: 0,
            total_linear_iters: 0,
            threshold,
            wall_time_s: 0.0,
            inner_iters: Vec::new(),
            decomposition: None,
            message: None,
        }
    }

    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&f64::NAN)
    }

    pub fn final_eps(&self) -> f64 {
        *self.eps_history.last().unwrap_or(&f64::NAN)
    }

    pub fn avg_gmres(&self) -> f64 {
        if self.gmres_iters.is_empty() {
            0.0
        } else {
            self.total_linear_iters as f64 / self.gmres_iters.len() as f64
        }
    }

    pub fn avg_inner(&self) -> Option<f64> {
        if self.inner_iters.is_empty() {
            None
        } else {
            Some(self.inner_iters.iter().sum::<usize>() as f64 / self.inner_iters.len() as f64)
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    pub report: SolveReport,
}

impl NewtonOutcome {
    /// The solution, or an error naming `what` if Newton stopped early.
    pub fn into_converged(self, what: &str) -> Result<(Vec<f64>, SolveReport)> {
        if self.report.converged {
            Ok((self.x, self.report))
        } else {
            Err(OcpError::NewtonFailed(format!(
                "{what}: {:?} after {} iterations, residual {:e}",
                self.report.status,
                self.report.outer_iters,
                self.report.final_residual()
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backtrack {
    pub alpha: f64,
    pub x: Vec<f64>,
    pub residual: Vec<f64>,
    pub norm: f64,
}

/// Largest `α ∈ {1, 1/2, 1/4, …}` with `‖F(x + αd)‖ ≤ σ·base_norm`. A residual
/// evaluation that fails (e.g. overflow) counts as a rejected trial.
pub fn backtrack(
    x: &[f64],
    d: &[f64],
    base_norm: f64,
    residual_fn: impl Fn(&[f64], &mut [f64]) -> Result<()>,
    sigma: f64,
    max_halvings: usize,
) -> Result<Backtrack> {
    let n = x.len();
    let mut trial = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut alpha = 1.0;
    for _ in 0..=max_halvings {
        for i in 0..n {
            trial[i] = x[i] + alpha * d[i];
        }
        if residual_fn(&trial, &mut r).is_ok() {
            let norm = norm2(&r);
            if norm <= sigma * base_norm {
                return Ok(Backtrack {
                    alpha,
                    x: trial,
                    residual: r,
                    norm,
                });
            }
        }
        alpha *= 0.5;
    }
    Err(OcpError::NewtonFailed(format!(
        "no admissible step after {max_halvings} halvings"
    )))
}

fn solve_linear(
    problem: &dyn NonlinearProblem,
    x: &[f64],
    eps: f64,
    rhs: &[f64],
    solver: &LinearSolver,
    precond: Option<&dyn PreconditionerFactory>,
) -> Result<(Vec<f64>, usize, bool)> {
    match solver {
        LinearSolver::Direct => {
            let lu = problem.factor_jacobian(x, eps)?;
            Ok((lu.solve(rhs), 0, true))
        }
        LinearSolver::Gmres(kcfg) => {
            let op = FnOperator::new(problem.dim(), |v: &[f64], out: &mut [f64]| {
                problem.jacobian_apply(x, eps, v, out)
            });
            let m = match precond {
                Some(f) => Some(f.build(x, eps)?),
                None => None,
            };
            let out = gmres(&op, rhs, m.as_deref(), kcfg)?;
            Ok((out.solution, out.iterations, out.converged))
        }
    }
}

/// Damped Newton with ε-continuation from `x0`.
///
/// Stops once `‖F_{ε_k}(x^k)‖ ≤ max{tol, tol·‖F_{ε_0}(x^0)‖}` and `ε_k = ε_min`.
/// Running out of iterations or step halvings is reported in the returned
/// [`SolveReport`]; malformed input and linear-algebra failures are errors.
pub fn newton_continuation(
    problem: &dyn NonlinearProblem,
    x0: Vec<f64>,
    sched: &ContinuationSchedule,
    cfg: &NewtonConfig,
    precond: Option<&dyn PreconditionerFactory>,
) -> Result<NewtonOutcome> {
    cfg.validate()?;
    let n = problem.dim();
    if x0.len() != n {
        return Err(OcpError::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    if let Some(index) = x0.iter().position(|v| !v.is_finite()) {
        return Err(OcpError::NonFinite {
            what: "initial guess",
            index,
        });
    }
    let clock = Instant::now();
    let mut x = x0;
    let mut eps = sched.eps0;
    let mut r = vec![0.0; n];
    problem.residual(&x, eps, &mut r)?;
    let mut rnorm = norm2(&r);
    let threshold = cfg.tol.max(cfg.tol * rnorm);
    let mut report = SolveReport::start(rnorm, eps, threshold);

    loop {
        if rnorm <= threshold && eps == sched.eps_min {
            report.status = SolveStatus::Converged;
            report.converged = true;
            break;
        }
        if report.outer_iters >= cfg.max_outer {
            report.status = SolveStatus::MaxOuterIterations;
            break;
        }
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let (d, iters, lin_ok) = solve_linear(problem, &x, eps, &rhs, &cfg.linear_solver, precond)?;
        report.gmres_iters.push(iters);
        report.total_linear_iters += iters;
        if !lin_ok {
            report.gmres_unconverged += 1;
        }
        let step = match backtrack(
            &x,
            &d,
            rnorm,
            |z, out| problem.residual(z, eps, out),
            cfg.sigma,
            cfg.max_halvings,
        ) {
            Ok(s) => s,
            Err(e) => {
                report.status = SolveStatus::LineSearchFailed;
                report.message = Some(e.to_string());
                report.gmres_iters.pop();
                report.total_linear_iters -= iters;
                break;
            }
        };
        report.alphas.push(step.alpha);
        x = step.x;
        let next = sched.next(eps);
        if next == eps {
            r = step.residual;
        } else {
            eps = next;
            problem.residual(&x, eps, &mut r)?;
        }
        rnorm = norm2(&r);
        report.outer_iters += 1;
        report.residual_history.push(rnorm);
        report.eps_history.push(eps);
    }
    report.wall_time_s = clock.elapsed().as_secs_f64();
    Ok(NewtonOutcome { x, report })
}
