use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Decomposition, Subdomain};
use crate::error::{OcpError, Result};
use crate::krylov::{gmres, FnOperator, KrylovConfig};
use crate::linalg::{norm2, PermutedLu};
use crate::newton::{
    newton_continuation, ContinuationSchedule, NewtonConfig, NonlinearProblem, SolveReport,
    SolveStatus,
};
use crate::system::{block_jacobian_apply, block_jacobian_factor, block_residual, Problem};

/// The subdomain problem `R_i F_ε(x + P_i c) = 0` in the correction `c`;
/// values of `x` outside `Ω_i` act as Dirichlet data.
pub struct LocalProblem<'a> {
    problem: &'a Problem,
    sub: &'a Subdomain,
    x: &'a [f64],
    base: Vec<f64>,
}

impl<'a> LocalProblem<'a> {
    pub fn new(problem: &'a Problem, sub: &'a Subdomain, x: &'a [f64]) -> Self {
        LocalProblem {
            problem,
            sub,
            base: sub.restrict_pair(x),
            x,
        }
    }

    fn shifted(&self, c: &[f64]) -> Vec<f64> {
        self.base.iter().zip(c).map(|(b, c)| b + c).collect()
    }
}

impl NonlinearProblem for LocalProblem<'_> {
    fn dim(&self) -> usize {
        self.base.len()
    }

    fn residual(&self, c: &[f64], eps: f64, out: &mut [f64]) -> Result<()> {
        let local = self.shifted(c);
        block_residual(
            self.problem,
            self.sub.overlap(),
            self.sub.global_indices(),
            &local,
            Some(self.x),
            eps,
            out,
        )
    }

    fn jacobian_apply(&self, c: &[f64], eps: f64, d: &[f64], out: &mut [f64]) -> Result<()> {
        let local = self.shifted(c);
        block_jacobian_apply(self.problem, self.sub.overlap(), &local, d, None, eps, out)
    }

    fn factor_jacobian(&self, c: &[f64], eps: f64) -> Result<PermutedLu> {
        block_jacobian_factor(self.problem, self.sub.overlap(), &self.shifted(c), eps)
    }
}

/// How the subdomain problems are solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolve {
    pub cfg: NewtonConfig,
    pub sched: ContinuationSchedule,
}

impl InnerSolve {
    /// Direct local solves at fixed `eps` with tolerance `tol`.
    pub fn fixed(eps: f64, tol: f64, sigma: f64) -> Result<Self> {
        Ok(InnerSolve {
            cfg: NewtonConfig {
                tol,
                sigma,
                ..NewtonConfig::direct()
            },
            sched: ContinuationSchedule::fixed(eps)?,
        })
    }
}

fn fingerprint(x: &[f64], eps: f64) -> u64 {
    let mut h = DefaultHasher::new();
    eps.to_bits().hash(&mut h);
    for v in x {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// `𝓕_ε(x) = Σ_i P̃_i C_i(x)` together with the data its Jacobian needs.
pub struct RaspenEvaluation {
    token: u64,
    eps: f64,
    pub value: Vec<f64>,
    pub corrections: Vec<Vec<f64>>,
    /// Inner Newton iterations per subdomain.
    pub inner_iters: Vec<usize>,
    factors: Vec<PermutedLu>,
}

impl RaspenEvaluation {
    pub fn norm(&self) -> f64 {
        norm2(&self.value)
    }

    /// Largest inner iteration count over subdomains (the parallel cost).
    pub fn max_inner(&self) -> usize {
        self.inner_iters.iter().copied().max().unwrap_or(0)
    }
}

fn wrap(sub: &Subdomain) -> impl Fn(OcpError) -> OcpError + '_ {
    move |e| OcpError::Subdomain {
        subdomain: sub.id(),
        source: Box::new(e),
    }
}

/// Solves every subdomain problem from the zero correction. The inner
/// schedule must end at the `ε` the evaluation is meant for.
pub fn raspen_residual(
    problem: &Problem,
    dec: &Decomposition,
    x: &[f64],
    inner: &InnerSolve,
) -> Result<RaspenEvaluation> {
    if x.len() != problem.dim() {
        return Err(OcpError::DimensionMismatch {
            expected: problem.dim(),
            got: x.len(),
        });
    }
    let eps = inner.sched.eps_min;
    let solved = dec
        .subdomains()
        .par_iter()
        .map(|sub| {
            let local = LocalProblem::new(problem, sub, x);
            let out = newton_continuation(
                &local,
                vec![0.0; local.dim()],
                &inner.sched,
                &inner.cfg,
                None,
            )
            .map_err(wrap(sub))?;
            let (c, report) = out.into_converged("subdomain Newton").map_err(wrap(sub))?;
            let lu = local.factor_jacobian(&c, eps).map_err(wrap(sub))?;
            Ok((c, report.outer_iters, lu))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut value = vec![0.0; x.len()];
    let mut corrections = Vec::with_capacity(solved.len());
    let mut inner_iters = Vec::with_capacity(solved.len());
    let mut factors = Vec::with_capacity(solved.len());
    for (sub, (c, iters, lu)) in dec.subdomains().iter().zip(solved) {
        sub.scatter_owned_pair(&c, &mut value);
        corrections.push(c);
        inner_iters.push(iters);
        factors.push(lu);
    }
    Ok(RaspenEvaluation {
        token: fingerprint(x, eps),
        eps,
        value,
        corrections,
        inner_iters,
        factors,
    })
}

/// `𝓕'_ε(x) d = Σ_i P̃_i C'_i(x) d` with
/// `C'_i(x) d = −(R_i F'(x⁽ⁱ⁾) P_i)⁻¹ R_i F'(x⁽ⁱ⁾) d`, `x⁽ⁱ⁾ = x + P_i C_i(x)`.
pub fn raspen_jacobian_apply(
    problem: &Problem,
    dec: &Decomposition,
    x: &[f64],
    eval: &RaspenEvaluation,
    d: &[f64],
    out: &mut [f64],
) -> Result<()> {
    if fingerprint(x, eval.eps) != eval.token {
        return Err(OcpError::StaleCorrections);
    }
    let locals = dec
        .subdomains()
        .par_iter()
        .enumerate()
        .map(|(i, sub)| {
            let mut state = sub.restrict_pair(x);
            for (s, c) in state.iter_mut().zip(&eval.corrections[i]) {
                *s += c;
            }
            let dl = sub.restrict_pair(d);
            let mut jd = vec![0.0; dl.len()];
            block_jacobian_apply(
                problem,
                sub.overlap(),
                &state,
                &dl,
                Some(d),
                eval.eps,
                &mut jd,
            )
            .map_err(wrap(sub))?;
            let mut w = eval.factors[i].solve(&jd);
            w.iter_mut().for_each(|v| *v = -*v);
            Ok(w)
        })
        .collect::<Result<Vec<_>>>()?;
    for (sub, w) in dec.subdomains().iter().zip(&locals) {
        sub.scatter_owned_pair(w, out);
    }
    Ok(())
}

/// One nonlinear RAS sweep `x⁺ = x + Σ_i P̃_i C_i(x)`.
pub fn ras_fixed_point_step(
    problem: &Problem,
    dec: &Decomposition,
    x: &[f64],
    inner: &InnerSolve,
) -> Result<Vec<f64>> {
    let eval = raspen_residual(problem, dec, x, inner)?;
    Ok(x.iter().zip(&eval.value).map(|(a, b)| a + b).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaspenConfig {
    pub tol: f64,
    pub max_outer: usize,
    pub krylov: KrylovConfig,
    /// Relaxed backtracking on `‖𝓕‖`; `None` takes full steps.
    pub backtracking: Option<f64>,
    pub max_halvings: usize,
}

impl Default for RaspenConfig {
    fn default() -> Self {
        RaspenConfig {
            tol: 1e-10,
            max_outer: 50,
            krylov: KrylovConfig::default(),
            backtracking: None,
            max_halvings: 30,
        }
    }
}

/// Newton on `𝓕_{ε_min}(x) = 0`. The first evaluation runs its inner solves
/// with `first_inner`; later ones solve directly at `ε_min` with `inner_cfg`.
pub fn raspen_solve(
    problem: &Problem,
    dec: &Decomposition,
    x0: Vec<f64>,
    first_inner: &InnerSolve,
    cfg: &RaspenConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    cfg.krylov.validate()?;
    let clock = Instant::now();
    let eps = first_inner.sched.eps_min;
    let later = InnerSolve {
        cfg: first_inner.cfg,
        sched: ContinuationSchedule::fixed(eps)?,
    };
    let mut x = x0;
    let mut eval = raspen_residual(problem, dec, &x, first_inner)?;
    let mut rnorm = eval.norm();
    let threshold = cfg.tol.max(cfg.tol * rnorm);
    let mut summary = dec.summary();
    summary.inner_iters_per_subdomain = eval.inner_iters.clone();
    let mut report = SolveReport {
        status: SolveStatus::MaxOuterIterations,
        converged: false,
        outer_iters: 0,
        residual_history: vec![rnorm],
        eps_history: vec![eps],
        alphas: Vec::new(),
        gmres_iters: Vec::new(),
        gmres_unconverged: 0,
        total_linear_iters: 0,
        threshold,
        wall_time_s: 0.0,
        inner_iters: vec![eval.max_inner()],
        decomposition: None,
        message: None,
    };

    loop {
        if rnorm <= threshold {
            report.status = SolveStatus::Converged;
            report.converged = true;
            break;
        }
        if report.outer_iters >= cfg.max_outer {
            break;
        }
        let op = FnOperator::new(x.len(), |v: &[f64], out: &mut [f64]| {
            raspen_jacobian_apply(problem, dec, &x, &eval, v, out)
        });
        let rhs: Vec<f64> = eval.value.iter().map(|v| -v).collect();
        let lin = gmres(&op, &rhs, None, &cfg.krylov)?;
        report.gmres_iters.push(lin.iterations);
        report.total_linear_iters += lin.iterations;
        if !lin.converged {
            report.gmres_unconverged += 1;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        let halvings = if cfg.backtracking.is_some() {
            cfg.max_halvings
        } else {
            0
        };
        for _ in 0..=halvings {
            let trial: Vec<f64> = x
                .iter()
                .zip(&lin.solution)
                .map(|(a, d)| a + alpha * d)
                .collect();
            match raspen_residual(problem, dec, &trial, &later) {
                Ok(next) => match cfg.backtracking {
                    Some(sigma) if next.norm() > sigma * rnorm => {}
                    _ => {
                        accepted = Some((trial, next));
                        break;
                    }
                },
                Err(e) if cfg.backtracking.is_none() => return Err(e),
                Err(_) => {}
            }
            alpha *= 0.5;
        }
        let Some((trial, next)) = accepted else {
            report.status = SolveStatus::LineSearchFailed;
            report.message = Some(format!("no admissible step after {halvings} halvings"));
            break;
        };
        x = trial;
        eval = next;
        rnorm = eval.norm();
        for (t, i) in summary
            .inner_iters_per_subdomain
            .iter_mut()
            .zip(&eval.inner_iters)
        {
            *t += i;
        }
        report.alphas.push(alpha);
        report.inner_iters.push(eval.max_inner());
        report.outer_iters += 1;
        report.residual_history.push(rnorm);
        report.eps_history.push(eps);
    }
    report.decomposition = Some(summary);
    report.wall_time_s = clock.elapsed().as_secs_f64();
    Ok((x, report))
}
