use rayon::prelude::*;

use super::Decomposition;
use crate::error::{OcpError, Result};
use crate::krylov::LinearOperator;
use crate::linalg::PermutedLu;
use crate::newton::PreconditionerFactory;
use crate::system::{block_jacobian_factor, Problem};

/// One-level restricted additive Schwarz for the Jacobian at a fixed iterate:
/// `M v = Σ_i P̃_i (R_i F'(x) P_i)⁻¹ R_i v`.
pub struct RasPreconditioner<'a> {
    dec: &'a Decomposition,
    factors: Vec<PermutedLu>,
}

impl<'a> RasPreconditioner<'a> {
    pub fn new(problem: &Problem, dec: &'a Decomposition, x: &[f64], eps: f64) -> Result<Self> {
        if dec.grid() != problem.grid() {
            return Err(OcpError::InvalidArgument(
                "decomposition and problem live on different grids".into(),
            ));
        }
        let factors = dec
            .subdomains()
            .par_iter()
            .map(|sub| {
                let local = sub.restrict_pair(x);
                block_jacobian_factor(problem, sub.overlap(), &local, eps).map_err(|e| {
                    OcpError::Subdomain {
                        subdomain: sub.id(),
                        source: Box::new(e),
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RasPreconditioner { dec, factors })
    }
}

impl LinearOperator for RasPreconditioner<'_> {
    fn dim(&self) -> usize {
        2 * self.dec.grid().len()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        let locals: Vec<Vec<f64>> = self
            .dec
            .subdomains()
            .par_iter()
            .zip(&self.factors)
            .map(|(sub, lu)| lu.solve(&sub.restrict_pair(v)))
            .collect();
        for (sub, local) in self.dec.subdomains().iter().zip(&locals) {
            sub.scatter_owned_pair(local, out);
        }
        Ok(())
    }
}

/// Builds a fresh [`RasPreconditioner`] at every Newton iterate.
pub struct RasFactory<'a> {
    pub problem: &'a Problem,
    pub dec: &'a Decomposition,
}

impl PreconditionerFactory for RasFactory<'_> {
    fn build<'b>(&'b self, x: &[f64], eps: f64) -> Result<Box<dyn LinearOperator + 'b>> {
        Ok(Box::new(RasPreconditioner::new(
            self.problem,
            self.dec,
            x,
            eps,
        )?))
    }
}
