//! Matrix-free GMRES (modified Gram–Schmidt Arnoldi, Givens rotations) with
//! an optional left preconditioner.

use crate::error::{OcpError, Result};
use crate::linalg::{axpy, dot, norm2};

/// A linear map `x ↦ A x` on vectors of length `dim()`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Wraps a closure as a [`LinearOperator`].
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnOperator { dim, f }
    }
}

impl<F> LinearOperator for FnOperator<F>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(x, out)
    }
}

/// The identity on `R^dim`.
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(x);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KrylovConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iters: usize,
    /// Restart length; `None` runs full GMRES.
    pub restart: Option<usize>,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig {
            rel_tol: 1e-12,
            abs_tol: 1e-300,
            max_iters: 5000,
            restart: None,
        }
    }
}

impl KrylovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(OcpError::InvalidArgument(
                "Krylov tolerances must be positive".into(),
            ));
        }
        if self.max_iters == 0 || self.restart == Some(0) {
            return Err(OcpError::InvalidArgument(
                "Krylov iteration limits must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmresOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Final (preconditioned) residual norm.
    pub residual: f64,
    pub converged: bool,
    /// Preconditioned residual norm before the first and after every iteration.
    pub history: Vec<f64>,
}

/// Solves `op x = rhs` from a zero initial guess. Stops when
/// `‖M(b − A x)‖ ≤ max(rel_tol·‖M b‖, abs_tol)`; reaching `max_iters` is not an
/// error and is reported through `converged = false`.
pub fn gmres(
    op: &dyn LinearOperator,
    rhs: &[f64],
    precond: Option<&dyn LinearOperator>,
    cfg: &KrylovConfig,
) -> Result<GmresOutcome> {
    cfg.validate()?;
    let n = op.dim();
    if rhs.len() != n {
        return Err(OcpError::DimensionMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    if let Some(m) = precond {
        if m.dim() != n {
            return Err(OcpError::DimensionMismatch {
                expected: n,
                got: m.dim(),
            });
        }
    }
    if let Some(index) = rhs.iter().position(|v| !v.is_finite()) {
        return Err(OcpError::NonFinite {
            what: "GMRES right-hand side",
            index,
        });
    }

    let mut tmp = vec![0.0; n];
    let precondition = |v: &[f64], out: &mut [f64]| -> Result<()> {
        match precond {
            Some(m) => m.apply(v, out),
            None => {
                out.copy_from_slice(v);
                Ok(())
            }
        }
    };

    let mut x = vec![0.0; n];
    let mut r = vec![0.0; n];
    precondition(rhs, &mut r)?;
    let target = (cfg.rel_tol * norm2(&r)).max(cfg.abs_tol);
    let mut beta = norm2(&r);
    let mut history = vec![beta];
    let mut total = 0;
    let mut done = beta <= target;
    let cycle = cfg.restart.unwrap_or(cfg.max_iters).min(cfg.max_iters);

    while !done && total < cfg.max_iters {
        let m = cycle.min(cfg.max_iters - total);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        // Hessenberg columns after rotation: column j has j+2 entries.
        let mut hcols: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![beta];
        let mut happy = false;

        for j in 0..m {
            op.apply(&basis[j], &mut tmp)?;
            let mut w = vec![0.0; n];
            precondition(&tmp, &mut w)?;
            let mut h = vec![0.0; j + 2];
            for (i, v) in basis.iter().enumerate() {
                h[i] = dot(&w, v);
                axpy(-h[i], v, &mut w);
            }
            let wn = norm2(&w);
            h[j + 1] = wn;
            if let Some(index) = h.iter().position(|v| !v.is_finite()) {
                return Err(OcpError::NonFinite {
                    what: "Arnoldi coefficient",
                    index,
                });
            }
            for i in 0..j {
                let t = cs[i] * h[i] + sn[i] * h[i + 1];
                h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
                h[i] = t;
            }
            let rho = h[j].hypot(h[j + 1]);
            let (c, s) = if rho == 0.0 {
                (1.0, 0.0)
            } else {
                (h[j] / rho, h[j + 1] / rho)
            };
            h[j] = rho;
            h[j + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g.push(-s * g[j]);
            g[j] *= c;
            hcols.push(h);
            total += 1;
            let res = g[j + 1].abs();
            history.push(res);
            // a vanishing new basis vector means the Krylov space is invariant
            if wn <= f64::EPSILON * rho.max(f64::MIN_POSITIVE) || wn == 0.0 {
                happy = true;
            }
            if res <= target || happy {
                done = true;
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }

        let k = hcols.len();
        let mut yv = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|c| hcols[c][i] * yv[c]).sum();
            if hcols[i][i] == 0.0 {
                return Err(OcpError::KrylovBreakdown(format!(
                    "singular Hessenberg at column {i}"
                )));
            }
            yv[i] = (g[i] - s) / hcols[i][i];
        }
        for (i, yi) in yv.iter().enumerate() {
            axpy(*yi, &basis[i], &mut x);
        }

        // true preconditioned residual for the next cycle / final report
        op.apply(&x, &mut tmp)?;
        for (t, b) in tmp.iter_mut().zip(rhs) {
            *t = b - *t;
        }
        precondition(&tmp, &mut r)?;
        beta = norm2(&r);
        done = done || beta <= target;
    }

    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(OcpError::NonFinite {
            what: "GMRES solution",
            index,
        });
    }
    Ok(GmresOutcome {
        converged: done,
        solution: x,
        iterations: total,
        residual: beta,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_op(d: Vec<f64>) -> impl LinearOperator {
        FnOperator::new(d.len(), move |x: &[f64], out: &mut [f64]| {
            for i in 0..x.len() {
                out[i] = d[i] * x[i];
            }
            Ok(())
        })
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let b: Vec<f64> = (0..17).map(|i| (i as f64).sin()).collect();
        let out = gmres(&Identity(17), &b, None, &KrylovConfig::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
        assert!(crate::linalg::max_abs_diff(&out.solution, &b) < 1e-15);
    }

    #[test]
    fn diagonal_matches_direct_inverse() {
        let k = 50;
        let op = diag_op((1..=k).map(|i| i as f64).collect());
        let b = vec![1.0; k];
        let out = gmres(&op, &b, None, &KrylovConfig::default()).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 50);
        for (i, x) in out.solution.iter().enumerate() {
            assert!((x - 1.0 / (i + 1) as f64).abs() <= 1e-10);
        }
    }

    #[test]
    fn residual_history_non_increasing() {
        let k = 40;
        let op = FnOperator::new(k, |x: &[f64], out: &mut [f64]| {
            // nonsymmetric tridiagonal
            for i in 0..x.len() {
                out[i] = 3.0 * x[i];
                if i > 0 {
                    out[i] -= 1.5 * x[i - 1];
                }
                if i + 1 < x.len() {
                    out[i] -= 0.5 * x[i + 1];
                }
            }
            Ok(())
        });
        let b: Vec<f64> = (0..k).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let out = gmres(&op, &b, None, &KrylovConfig::default()).unwrap();
        assert!(out.converged);
        for w in out.history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn preconditioned_and_plain_agree() {
        let k = 30;
        let d: Vec<f64> = (0..k).map(|i| 1.0 + i as f64 * i as f64).collect();
        let dd = d.clone();
        let op = FnOperator::new(k, move |x: &[f64], out: &mut [f64]| {
            for i in 0..x.len() {
                out[i] = dd[i] * x[i] + if i > 0 { 0.3 * x[i - 1] } else { 0.0 };
            }
            Ok(())
        });
        let inv = diag_op(d.iter().map(|v| 1.0 / v).collect());
        let b: Vec<f64> = (0..k).map(|i| (i as f64 * 0.3).cos()).collect();
        let plain = gmres(&op, &b, None, &KrylovConfig::default()).unwrap();
        let pre = gmres(&op, &b, Some(&inv), &KrylovConfig::default()).unwrap();
        assert!(plain.converged && pre.converged);
        assert!(crate::linalg::max_abs_diff(&plain.solution, &pre.solution) < 1e-10);
        assert!(pre.iterations <= plain.iterations);
    }

    #[test]
    fn exact_preconditioner_gives_one_iteration() {
        let op = diag_op(vec![2.0, 5.0, 7.0, 11.0]);
        let inv = diag_op(vec![0.5, 0.2, 1.0 / 7.0, 1.0 / 11.0]);
        let out = gmres(
            &op,
            &[1.0, 1.0, 1.0, 1.0],
            Some(&inv),
            &KrylovConfig::default(),
        )
        .unwrap();
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn reports_non_convergence_at_cap() {
        let k = 30;
        let op = diag_op((1..=k).map(|i| i as f64).collect());
        let cfg = KrylovConfig {
            max_iters: 3,
            ..KrylovConfig::default()
        };
        let out = gmres(&op, &vec![1.0; k], None, &cfg).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);
    }

    #[test]
    fn restarted_gmres_converges() {
        let k = 60;
        let op = diag_op((1..=k).map(|i| 1.0 + 0.1 * i as f64).collect());
        let cfg = KrylovConfig {
            restart: Some(5),
            max_iters: 500,
            ..KrylovConfig::default()
        };
        let b = vec![1.0; k];
        let out = gmres(&op, &b, None, &cfg).unwrap();
        assert!(out.converged);
        for (i, x) in out.solution.iter().enumerate() {
            assert!((x - 1.0 / (1.0 + 0.1 * (i + 1) as f64)).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let op = Identity(3);
        assert!(gmres(&op, &[1.0, f64::NAN, 0.0], None, &KrylovConfig::default()).is_err());
        assert!(gmres(&op, &[1.0], None, &KrylovConfig::default()).is_err());
        let bad = KrylovConfig {
            rel_tol: 0.0,
            ..KrylovConfig::default()
        };
        assert!(gmres(&op, &[1.0, 0.0, 0.0], None, &bad).is_err());
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let out = gmres(&Identity(4), &[0.0; 4], None, &KrylovConfig::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.solution, vec![0.0; 4]);
        assert!(out.converged);
    }
}
