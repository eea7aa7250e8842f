//! Manufactured problems with a known solution of the smoothed system.

use std::f64::consts::PI;

use super::{recover_control, solve_state, Nonlinearity, Problem, StatePair};
use crate::error::{OcpError, Result};
use crate::grid::{Field, Grid};
use crate::smoothing::SmoothingParam;

/// Shape of the prescribed adjoint `p̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdjointProfile {
    /// `p̄ = 1.3 μ sin(2π k̃ x₁) sin(2π k̃ x₂)`
    Oscillating { k_tilde: f64 },
    /// `p̄ = μ s(x₁) s(x₂)` where `s` is flattened to at least 1 on `[0.25, 0.75]`,
    /// so the control vanishes on a patch where `|p̄| = μ` exactly.
    Plateau,
}

impl AdjointProfile {
    pub fn value(&self, mu: f64, x1: f64, x2: f64) -> f64 {
        match *self {
            AdjointProfile::Oscillating { k_tilde } => {
                1.3 * mu * (2.0 * PI * k_tilde * x1).sin() * (2.0 * PI * k_tilde * x2).sin()
            }
            AdjointProfile::Plateau => mu * plateau_factor(x1) * plateau_factor(x2),
        }
    }
}

/// `s(x) = max{1, 2|sin 2πx|}` on `[0.25, 0.75]`, `2|sin 2πx|` elsewhere.
pub fn plateau_factor(x: f64) -> f64 {
    let base = 2.0 * (2.0 * PI * x).sin().abs();
    if (0.25..=0.75).contains(&x) {
        base.max(1.0)
    } else {
        base
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestProblemParams {
    pub kappa: f64,
    pub nu: f64,
    pub mu: f64,
    pub profile: AdjointProfile,
    pub eps_construct: f64,
}

impl Default for TestProblemParams {
    fn default() -> Self {
        TestProblemParams {
            kappa: 0.1,
            nu: 1e-6,
            mu: 1.0,
            profile: AdjointProfile::Oscillating { k_tilde: 5.0 },
            eps_construct: 1e-15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestProblem {
    pub problem: Problem,
    /// `(ȳ, p̄)`, a solution of the smoothed system at `eps_construct`.
    pub reference: StatePair,
    pub eps_construct: f64,
}

/// Prescribes `p̄`, solves the state equation for `ȳ` with the control
/// recovered from `p̄`, and sets `y_d = −A p̄ − φ'(ȳ) p̄ + ȳ` with `f ≡ 0`.
pub fn construct_test_problem(grid: Grid, params: &TestProblemParams) -> Result<TestProblem> {
    if let AdjointProfile::Oscillating { k_tilde } = params.profile {
        if !(k_tilde > 0.0) {
            return Err(OcpError::InvalidArgument(format!(
                "frequency must be positive, got {k_tilde}"
            )));
        }
    }
    let eps = SmoothingParam::new(params.eps_construct)?;
    let phi = Nonlinearity::from_kappa(params.kappa);
    let zero = Field::zeros(grid);
    let base = Problem::new(phi, params.nu, params.mu, zero.clone(), zero.clone())?;
    let p_bar = grid.sample(|x1, x2| params.profile.value(params.mu, x1, x2));
    let u_bar = recover_control(&p_bar, &base, eps);
    let y_bar = solve_state(&u_bar, &base)?;

    let mut y_d = vec![0.0; grid.len()];
    base.laplacian().apply(p_bar.values(), &mut y_d);
    for (i, v) in y_d.iter_mut().enumerate() {
        let (y, p) = (y_bar.values()[i], p_bar.values()[i]);
        *v = -*v - phi.dphi(y) * p + y;
    }
    let problem = Problem::new(phi, params.nu, params.mu, zero, Field::new(grid, y_d)?)?;
    Ok(TestProblem {
        reference: StatePair::new(&y_bar, &p_bar)?,
        problem,
        eps_construct: params.eps_construct,
    })
}

/// Desired state `y_d = sin(2πx₁) sin(2πx₂) e^{2x₁} / 6` with `f ≡ 0`, used for
/// the sparsity study; the exact solution is not known.
pub fn sparsity_problem(grid: Grid, kappa: f64, nu: f64, mu: f64) -> Result<Problem> {
    let y_d = grid
        .sample(|x1, x2| (2.0 * PI * x1).sin() * (2.0 * PI * x2).sin() * (2.0 * x1).exp() / 6.0);
    Problem::new(
        Nonlinearity::from_kappa(kappa),
        nu,
        mu,
        Field::zeros(grid),
        y_d,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::residual;

    #[test]
    fn oscillating_profile_value() {
        let p = AdjointProfile::Oscillating { k_tilde: 5.0 };
        assert!((p.value(1.0, 0.25, 0.25) - 1.3).abs() < 1e-12);
        assert!((p.value(2.0, 0.25, 0.25) - 2.6).abs() < 1e-12);
    }

    #[test]
    fn plateau_profile_values() {
        assert!((plateau_factor(0.25) - 2.0).abs() < 1e-12);
        assert_eq!(plateau_factor(0.5), 1.0);
        assert!(plateau_factor(0.0).abs() < 1e-12);
        assert!((plateau_factor(0.1) - 2.0 * (0.2 * PI).sin()).abs() < 1e-15);
        assert_eq!(AdjointProfile::Plateau.value(0.5, 0.5, 0.5), 0.5);
    }

    #[test]
    fn construction_solves_smoothed_system() {
        let grid = Grid::new(40).unwrap();
        let tp = construct_test_problem(grid, &TestProblemParams::default()).unwrap();
        let r = residual(
            &tp.reference,
            &tp.problem,
            SmoothingParam::new(1e-15).unwrap(),
        )
        .unwrap();
        let scale = tp.problem.nu().recip() * tp.problem.mu();
        let sup = crate::linalg::norm_inf(r.as_slice());
        assert!(sup <= 1e-10 * scale, "residual {sup}");
        // the adjoint row is exact up to rounding of the y_d assembly
        assert!(crate::linalg::norm_inf(r.p()) <= 1e-9);
    }

    #[test]
    fn construction_control_is_sparse() {
        let grid = Grid::new(40).unwrap();
        let tp = construct_test_problem(grid, &TestProblemParams::default()).unwrap();
        let u = recover_control(
            &tp.reference.p_field(),
            &tp.problem,
            SmoothingParam::new(1e-15).unwrap(),
        );
        let zeros = u.values().iter().filter(|v| v.abs() < 1e-8).count();
        assert!(zeros > 0 && zeros < grid.len());
    }

    #[test]
    fn plateau_construction_at_zero_eps() {
        let grid = Grid::new(24).unwrap();
        let params = TestProblemParams {
            profile: AdjointProfile::Plateau,
            nu: 1e-2,
            eps_construct: 0.0,
            ..TestProblemParams::default()
        };
        let tp = construct_test_problem(grid, &params).unwrap();
        let r = residual(
            &tp.reference,
            &tp.problem,
            SmoothingParam::new(0.0).unwrap(),
        )
        .unwrap();
        assert!(crate::linalg::norm_inf(r.as_slice()) < 1e-9);
    }

    #[test]
    fn rejects_bad_frequency() {
        let params = TestProblemParams {
            profile: AdjointProfile::Oscillating { k_tilde: 0.0 },
            ..TestProblemParams::default()
        };
        assert!(construct_test_problem(Grid::new(8).unwrap(), &params).is_err());
    }
}
