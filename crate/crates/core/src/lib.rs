//! Solvers for L¹-sparse semilinear elliptic optimal control on the unit square.
//!
//! The reduced optimality system in the state/adjoint pair `(y, p)` is smoothed
//! with a square-root approximation of the clamp, then solved by damped Newton
//! with ε-continuation, linearly RAS-preconditioned Newton–GMRES, or one-level
//! RASPEN (Newton on the nonlinear restricted additive Schwarz fixed point).

// `!(x > 0.0)` is used throughout so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod grid;
pub mod harness;
pub mod krylov;
pub mod linalg;
pub mod newton;
pub mod schwarz;
pub mod smoothing;
pub mod system;

pub use error::{OcpError, Result};
