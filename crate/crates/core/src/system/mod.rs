//! The discrete smoothed optimality system `F_ε(y, p) = 0`:
//!
//! ```text
//! A y + φ(y) − f + (1/ν)(p + μ P_ε(−p/μ)) = 0
//! A p + φ'(y) p − y + y_d                 = 0
//! ```
//!
//! Residual and Jacobian kernels work on a rectangular block of the grid so the
//! same code serves the monolithic system and the Schwarz subdomain problems.

mod testcases;

pub use testcases::{
    construct_test_problem, plateau_factor, sparsity_problem, AdjointProfile, TestProblem,
    TestProblemParams,
};

use crate::error::{OcpError, Result};
use crate::grid::{apply_laplacian_block, build_laplacian, DiscreteOperator, Field, Grid, Rect};
use crate::linalg::{BandedMatrix, PermutedLu};
use crate::newton::{self, ContinuationSchedule, NewtonConfig, NonlinearProblem};
use crate::smoothing::{self, dp_eps, p_eps, PenaltyRatio, SmoothingParam};

/// `φ(s) = κ(s³ + e^{κs})`, or `φ ≡ 0` for the linear case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonlinearity {
    Linear,
    CubicExp { kappa: f64 },
}

impl Nonlinearity {
    pub fn from_kappa(kappa: f64) -> Self {
        if kappa == 0.0 {
            Nonlinearity::Linear
        } else {
            Nonlinearity::CubicExp { kappa }
        }
    }

    pub fn kappa(&self) -> f64 {
        match *self {
            Nonlinearity::Linear => 0.0,
            Nonlinearity::CubicExp { kappa } => kappa,
        }
    }

    #[inline]
    pub fn phi(&self, s: f64) -> f64 {
        match *self {
            Nonlinearity::Linear => 0.0,
            Nonlinearity::CubicExp { kappa } => kappa * (s * s * s + (kappa * s).exp()),
        }
    }

    #[inline]
    pub fn dphi(&self, s: f64) -> f64 {
        match *self {
            Nonlinearity::Linear => 0.0,
            Nonlinearity::CubicExp { kappa } => kappa * (3.0 * s * s + kappa * (kappa * s).exp()),
        }
    }

    #[inline]
    pub fn ddphi(&self, s: f64) -> f64 {
        match *self {
            Nonlinearity::Linear => 0.0,
            Nonlinearity::CubicExp { kappa } => {
                kappa * (6.0 * s + kappa * kappa * (kappa * s).exp())
            }
        }
    }
}

/// Problem data: weights, nonlinearity, source and desired state on one grid.
#[derive(Debug, Clone)]
pub struct Problem {
    grid: Grid,
    phi: Nonlinearity,
    nu: f64,
    mu: f64,
    f: Field,
    y_d: Field,
    laplacian: DiscreteOperator,
}

impl Problem {
    pub fn new(phi: Nonlinearity, nu: f64, mu: f64, f: Field, y_d: Field) -> Result<Self> {
        if !(nu > 0.0) || !(mu > 0.0) {
            return Err(OcpError::InvalidArgument(format!(
                "weights must be positive: nu={nu}, mu={mu}"
            )));
        }
        if f.grid() != y_d.grid() {
            return Err(OcpError::DimensionMismatch {
                expected: f.grid().len(),
                got: y_d.grid().len(),
            });
        }
        let grid = *f.grid();
        Ok(Problem {
            grid,
            phi,
            nu,
            mu,
            laplacian: build_laplacian(&grid)?,
            f,
            y_d,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.phi
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn source(&self) -> &Field {
        &self.f
    }

    pub fn desired_state(&self) -> &Field {
        &self.y_d
    }

    pub fn laplacian(&self) -> &DiscreteOperator {
        &self.laplacian
    }

    /// Size of the coupled unknown `(y, p)`.
    pub fn dim(&self) -> usize {
        2 * self.grid.len()
    }
}

/// The unknown of the coupled system: state `y` and adjoint `p`, stored as `[y; p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePair {
    grid: Grid,
    data: Vec<f64>,
}

impl StatePair {
    pub fn new(y: &Field, p: &Field) -> Result<Self> {
        if y.grid() != p.grid() {
            return Err(OcpError::DimensionMismatch {
                expected: y.grid().len(),
                got: p.grid().len(),
            });
        }
        let mut data = y.values().to_vec();
        data.extend_from_slice(p.values());
        Ok(StatePair {
            grid: *y.grid(),
            data,
        })
    }

    pub fn zeros(grid: Grid) -> Self {
        StatePair {
            grid,
            data: vec![0.0; 2 * grid.len()],
        }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != 2 * grid.len() {
            return Err(OcpError::DimensionMismatch {
                expected: 2 * grid.len(),
                got: data.len(),
            });
        }
        Ok(StatePair { grid, data })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn y(&self) -> &[f64] {
        &self.data[..self.grid.len()]
    }

    pub fn p(&self) -> &[f64] {
        &self.data[self.grid.len()..]
    }

    pub fn y_field(&self) -> Field {
        Field::new(self.grid, self.y().to_vec()).expect("state pair entries are finite")
    }

    pub fn p_field(&self) -> Field {
        Field::new(self.grid, self.p().to_vec()).expect("state pair entries are finite")
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm2(&self.data)
    }
}

fn check_finite(out: &[f64], what: &'static str) -> Result<()> {
    match out.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(OcpError::NonFinite { what, index }),
        None => Ok(()),
    }
}

/// Residual rows for the points of `rect`. `local` is `[y; p]` on the block;
/// stencil neighbours outside the block read `exterior` (a full `[y; p]`).
pub(crate) fn block_residual(
    problem: &Problem,
    rect: &Rect,
    global_index: &[usize],
    local: &[f64],
    exterior: Option<&[f64]>,
    eps: f64,
    out: &mut [f64],
) -> Result<()> {
    let m = rect.len();
    let n = problem.grid.len();
    let (y, p) = local.split_at(m);
    let (out_y, out_p) = out.split_at_mut(m);
    let (ext_y, ext_p) = match exterior {
        Some(e) => (Some(&e[..n]), Some(&e[n..])),
        None => (None, None),
    };
    apply_laplacian_block(&problem.grid, rect, y, ext_y, out_y);
    apply_laplacian_block(&problem.grid, rect, p, ext_p, out_p);
    let (nu, mu) = (problem.nu, problem.mu);
    let f = problem.f.values();
    let y_d = problem.y_d.values();
    for l in 0..m {
        let g = global_index[l];
        let (yl, pl) = (y[l], p[l]);
        out_y[l] += problem.phi.phi(yl) - f[g] + (pl + mu * p_eps(-pl / mu, eps)) / nu;
        out_p[l] += problem.phi.dphi(yl) * pl - yl + y_d[g];
    }
    check_finite(out, "residual")
}

/// Jacobian rows for the points of `rect` at the block state `local`, applied
/// to the block direction `dir`; neighbour directions outside the block come
/// from `exterior_dir` (zero when `None`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn block_jacobian_apply(
    problem: &Problem,
    rect: &Rect,
    local: &[f64],
    dir: &[f64],
    exterior_dir: Option<&[f64]>,
    eps: f64,
    out: &mut [f64],
) -> Result<()> {
    let m = rect.len();
    let n = problem.grid.len();
    let (y, p) = local.split_at(m);
    let (dy, dp) = dir.split_at(m);
    let (out_y, out_p) = out.split_at_mut(m);
    let (ext_y, ext_p) = match exterior_dir {
        Some(e) => (Some(&e[..n]), Some(&e[n..])),
        None => (None, None),
    };
    apply_laplacian_block(&problem.grid, rect, dy, ext_y, out_y);
    apply_laplacian_block(&problem.grid, rect, dp, ext_p, out_p);
    let (nu, mu) = (problem.nu, problem.mu);
    for l in 0..m {
        let (yl, pl) = (y[l], p[l]);
        let d1 = problem.phi.dphi(yl);
        let d2 = problem.phi.ddphi(yl);
        let coupling = (1.0 - dp_eps(-pl / mu, eps)) / nu;
        out_y[l] += d1 * dy[l] + coupling * dp[l];
        out_p[l] += (d2 * pl - 1.0) * dy[l] + d1 * dp[l];
    }
    check_finite(out, "Jacobian action")
}

/// Assembles the block Jacobian (Dirichlet coupling to the exterior dropped)
/// in point-interleaved ordering and factorises it.
pub(crate) fn block_jacobian_factor(
    problem: &Problem,
    rect: &Rect,
    local: &[f64],
    eps: f64,
) -> Result<PermutedLu> {
    let m = rect.len();
    let w = rect.width();
    let band = 2 * w + 1;
    let mut jac = BandedMatrix::zeros(2 * m, band, band);
    let inv_h2 = 1.0 / (problem.grid.h() * problem.grid.h());
    let (y, p) = local.split_at(m);
    let (nu, mu) = (problem.nu, problem.mu);
    for (lr, row) in rect.rows.clone().enumerate() {
        for (lc, col) in rect.cols.clone().enumerate() {
            let l = lr * w + lc;
            let (iy, ip) = (2 * l, 2 * l + 1);
            let (yl, pl) = (y[l], p[l]);
            let d1 = problem.phi.dphi(yl);
            jac.add(iy, iy, 4.0 * inv_h2 + d1);
            jac.add(ip, ip, 4.0 * inv_h2 + d1);
            jac.add(iy, ip, (1.0 - dp_eps(-pl / mu, eps)) / nu);
            jac.add(ip, iy, problem.phi.ddphi(yl) * pl - 1.0);
            for (r, c) in crate::grid::interior_neighbors(&problem.grid, row, col) {
                if rect.contains(r, c) {
                    let k = rect.local_index(r, c);
                    jac.add(iy, 2 * k, -inv_h2);
                    jac.add(ip, 2 * k + 1, -inv_h2);
                }
            }
        }
    }
    let order = (0..2 * m)
        .map(|i| if i < m { 2 * i } else { 2 * (i - m) + 1 })
        .collect();
    PermutedLu::new(jac.factor()?, order)
}

pub fn residual(x: &StatePair, problem: &Problem, eps: SmoothingParam) -> Result<StatePair> {
    let mut out = vec![0.0; problem.dim()];
    residual_into(problem, x.as_slice(), eps.value(), &mut out)?;
    StatePair::from_vec(problem.grid, out)
}

pub fn residual_into(problem: &Problem, x: &[f64], eps: f64, out: &mut [f64]) -> Result<()> {
    if x.len() != problem.dim() {
        return Err(OcpError::DimensionMismatch {
            expected: problem.dim(),
            got: x.len(),
        });
    }
    let rect = problem.grid.full_rect();
    let index: Vec<usize> = (0..problem.grid.len()).collect();
    block_residual(problem, &rect, &index, x, None, eps, out)
}

pub fn jacobian_apply(
    x: &StatePair,
    d: &StatePair,
    problem: &Problem,
    eps: SmoothingParam,
) -> Result<StatePair> {
    if eps.value() == 0.0 {
        return Err(OcpError::InvalidArgument("Jacobian needs ε > 0".into()));
    }
    let mut out = vec![0.0; problem.dim()];
    jacobian_apply_into(problem, x.as_slice(), d.as_slice(), eps.value(), &mut out)?;
    StatePair::from_vec(problem.grid, out)
}

pub fn jacobian_apply_into(
    problem: &Problem,
    x: &[f64],
    d: &[f64],
    eps: f64,
    out: &mut [f64],
) -> Result<()> {
    let rect = problem.grid.full_rect();
    block_jacobian_apply(problem, &rect, x, d, None, eps, out)
}

/// `u = −(1/ν)(p + μ P_ε(−p/μ))`
pub fn recover_control(p: &Field, problem: &Problem, eps: SmoothingParam) -> Field {
    let (nu, mu, e) = (problem.nu, problem.mu, eps.value());
    let values = p
        .values()
        .iter()
        .map(|&pi| -(pi + mu * p_eps(-pi / mu, e)) / nu)
        .collect();
    Field::new(*p.grid(), values).expect("control is finite for finite p")
}

/// `λ = P_ε(−p/μ)`, the smoothed multiplier of the L¹ term; entries in `[-1, 1]`.
pub fn recover_multiplier(p: &Field, problem: &Problem, eps: SmoothingParam) -> Field {
    let (mu, e) = (problem.mu, eps.value());
    let values = p.values().iter().map(|&pi| p_eps(-pi / mu, e)).collect();
    Field::new(*p.grid(), values).expect("multiplier is bounded")
}

/// Discrete `L²` inner product with cell weight `h²`.
pub fn l2_inner(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    grid.h() * grid.h() * crate::linalg::dot(a, b)
}

/// `J_ε(u) = ½‖S(u) − y_d‖² + (ν/2)‖u‖² + μ Σ h² D_ε(u_i)`.
pub fn objective(u: &Field, problem: &Problem, eps: SmoothingParam, quad_tol: f64) -> Result<f64> {
    let y = solve_state(u, problem)?;
    let grid = problem.grid;
    let misfit: Vec<f64> = y
        .values()
        .iter()
        .zip(problem.y_d.values())
        .map(|(a, b)| a - b)
        .collect();
    let tracking = 0.5 * l2_inner(&grid, &misfit, &misfit);
    let l2 = 0.5 * problem.nu * l2_inner(&grid, u.values(), u.values());
    let ratio = PenaltyRatio::new(problem.nu / problem.mu)?;
    let h2 = grid.h() * grid.h();
    let mut penalty = 0.0;
    for &ui in u.values() {
        penalty += h2 * smoothing::penalty_antiderivative(ui, eps, ratio, quad_tol)?;
    }
    Ok(tracking + l2 + problem.mu * penalty)
}

/// State equation `A y + φ(y) − f − u = 0` as a Newton problem.
struct StateEquation<'a> {
    problem: &'a Problem,
    u: &'a [f64],
}

impl NonlinearProblem for StateEquation<'_> {
    fn dim(&self) -> usize {
        self.problem.grid.len()
    }

    fn residual(&self, y: &[f64], _eps: f64, out: &mut [f64]) -> Result<()> {
        self.problem.laplacian.apply(y, out);
        let f = self.problem.f.values();
        for (i, o) in out.iter_mut().enumerate() {
            *o += self.problem.phi.phi(y[i]) - f[i] - self.u[i];
        }
        check_finite(out, "state residual")
    }

    fn jacobian_apply(&self, y: &[f64], _eps: f64, d: &[f64], out: &mut [f64]) -> Result<()> {
        self.problem.laplacian.apply(d, out);
        for (i, o) in out.iter_mut().enumerate() {
            *o += self.problem.phi.dphi(y[i]) * d[i];
        }
        Ok(())
    }

    fn factor_jacobian(&self, y: &[f64], _eps: f64) -> Result<PermutedLu> {
        let a = self.problem.laplacian.matrix();
        let n = a.nrows();
        let k = self.problem.grid.n();
        let mut band = BandedMatrix::zeros(n, k, k);
        for r in 0..n {
            for (c, v) in a.row(r) {
                band.add(r, c, v);
            }
            band.add(r, r, self.problem.phi.dphi(y[r]));
        }
        PermutedLu::new(band.factor()?, (0..n).collect())
    }
}

/// Solves `A y + φ(y) = f + u` by damped Newton with direct linear solves.
pub fn solve_state(u: &Field, problem: &Problem) -> Result<Field> {
    if u.grid() != problem.grid() {
        return Err(OcpError::DimensionMismatch {
            expected: problem.grid.len(),
            got: u.grid().len(),
        });
    }
    let eq = StateEquation {
        problem,
        u: u.values(),
    };
    let cfg = NewtonConfig {
        tol: 1e-13,
        max_outer: 100,
        ..NewtonConfig::direct()
    };
    let sched = ContinuationSchedule::fixed(1.0)?;
    let out = newton::newton_continuation(&eq, vec![0.0; eq.dim()], &sched, &cfg, None)?;
    let (y, _) = out.into_converged("state equation")?;
    Field::new(problem.grid, y)
}

/// The monolithic smoothed optimality system on the whole grid.
pub struct MonolithicSystem<'a> {
    problem: &'a Problem,
}

impl<'a> MonolithicSystem<'a> {
    pub fn new(problem: &'a Problem) -> Self {
        MonolithicSystem { problem }
    }
}

impl NonlinearProblem for MonolithicSystem<'_> {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn residual(&self, x: &[f64], eps: f64, out: &mut [f64]) -> Result<()> {
        residual_into(self.problem, x, eps, out)
    }

    fn jacobian_apply(&self, x: &[f64], eps: f64, d: &[f64], out: &mut [f64]) -> Result<()> {
        jacobian_apply_into(self.problem, x, d, eps, out)
    }

    fn factor_jacobian(&self, x: &[f64], eps: f64) -> Result<PermutedLu> {
        block_jacobian_factor(self.problem, &self.problem.grid.full_rect(), x, eps)
    }
}
