//! Overlapping domain decomposition: RAS preconditioning of the Newton
//! Jacobian and one-level RASPEN.

mod decomposition;
mod ras;
mod raspen;

pub use decomposition::{decompose, Decomposition, DecompositionSummary, Subdomain, TileSummary};
pub use ras::{RasFactory, RasPreconditioner};
pub use raspen::{
    ras_fixed_point_step, raspen_jacobian_apply, raspen_residual, raspen_solve, InnerSolve,
    LocalProblem, RaspenConfig, RaspenEvaluation,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::krylov::{gmres, FnOperator, KrylovConfig, LinearOperator};
    use crate::linalg::{max_abs_diff, norm2};
    use crate::newton::{newton_continuation, ContinuationSchedule, NewtonConfig};
    use crate::system::{
        construct_test_problem, jacobian_apply_into, residual_into, MonolithicSystem, Problem,
        TestProblemParams,
    };
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn small_problem(n: usize) -> Problem {
        let params = TestProblemParams {
            profile: crate::system::AdjointProfile::Oscillating { k_tilde: 1.0 },
            nu: 1e-2,
            ..TestProblemParams::default()
        };
        construct_test_problem(Grid::new(n).unwrap(), &params)
            .unwrap()
            .problem
    }

    fn random_vec(len: usize, rng: &mut StdRng, scale: f64) -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
    }

    #[test]
    fn ras_is_linear() {
        let mut rng = StdRng::seed_from_u64(1);
        let p = small_problem(12);
        let dec = decompose(p.grid(), 2, 2, 2).unwrap();
        let x = random_vec(p.dim(), &mut rng, 1.0);
        let m = RasPreconditioner::new(&p, &dec, &x, 1e-2).unwrap();
        let a = random_vec(p.dim(), &mut rng, 1.0);
        let b = random_vec(p.dim(), &mut rng, 1.0);
        let combo: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 2.0 * u - 0.5 * v).collect();
        let (mut ma, mut mb, mut mc) = (vec![0.0; p.dim()], vec![0.0; p.dim()], vec![0.0; p.dim()]);
        m.apply(&a, &mut ma).unwrap();
        m.apply(&b, &mut mb).unwrap();
        m.apply(&combo, &mut mc).unwrap();
        let expect: Vec<f64> = ma.iter().zip(&mb).map(|(u, v)| 2.0 * u - 0.5 * v).collect();
        assert!(max_abs_diff(&mc, &expect) <= 1e-10 * norm2(&expect));
    }

    #[test]
    fn single_subdomain_ras_is_exact_inverse() {
        let mut rng = StdRng::seed_from_u64(2);
        let p = small_problem(10);
        let dec = decompose(p.grid(), 1, 1, 2).unwrap();
        let x = random_vec(p.dim(), &mut rng, 1.0);
        let m = RasPreconditioner::new(&p, &dec, &x, 1e-3).unwrap();
        let op = FnOperator::new(p.dim(), |v: &[f64], out: &mut [f64]| {
            jacobian_apply_into(&p, &x, v, 1e-3, out)
        });
        let b = random_vec(p.dim(), &mut rng, 1.0);
        let out = gmres(&op, &b, Some(&m), &KrylovConfig::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn local_correction_vanishes_at_solution() {
        let grid = Grid::new(16).unwrap();
        let params = TestProblemParams {
            profile: crate::system::AdjointProfile::Oscillating { k_tilde: 1.0 },
            nu: 1e-2,
            eps_construct: 1e-2,
            ..TestProblemParams::default()
        };
        let tp = construct_test_problem(grid, &params).unwrap();
        let dec = decompose(&grid, 2, 2, 2).unwrap();
        let inner = InnerSolve::fixed(1e-2, 1e-8, 1.1).unwrap();
        let eval = raspen_residual(&tp.problem, &dec, tp.reference.as_slice(), &inner).unwrap();
        assert!(eval.norm() < 1e-8, "{}", eval.norm());
    }

    #[test]
    fn single_subdomain_raspen_is_monolithic_newton() {
        let p = small_problem(12);
        let dec = decompose(p.grid(), 1, 1, 0).unwrap();
        let x = vec![0.0; p.dim()];
        let inner = InnerSolve::fixed(1e-3, 1e-12, 1.1).unwrap();
        let eval = raspen_residual(&p, &dec, &x, &inner).unwrap();
        let sol: Vec<f64> = x.iter().zip(&eval.value).map(|(a, b)| a + b).collect();
        let mut r = vec![0.0; p.dim()];
        residual_into(&p, &sol, 1e-3, &mut r).unwrap();
        let mut r0 = vec![0.0; p.dim()];
        residual_into(&p, &x, 1e-3, &mut r0).unwrap();
        assert!(norm2(&r) <= 1e-12 * norm2(&r0));
        // 𝓕' = −I
        let mut rng = StdRng::seed_from_u64(4);
        let d = random_vec(p.dim(), &mut rng, 1.0);
        let mut out = vec![0.0; p.dim()];
        raspen_jacobian_apply(&p, &dec, &x, &eval, &d, &mut out).unwrap();
        let neg: Vec<f64> = d.iter().map(|v| -v).collect();
        assert!(max_abs_diff(&out, &neg) < 1e-8);
    }

    #[test]
    fn jacobian_rejects_stale_corrections() {
        let p = small_problem(8);
        let dec = decompose(p.grid(), 2, 2, 1).unwrap();
        let x = vec![0.0; p.dim()];
        let inner = InnerSolve::fixed(1e-2, 1e-10, 1.1).unwrap();
        let eval = raspen_residual(&p, &dec, &x, &inner).unwrap();
        let mut moved = x.clone();
        moved[3] = 1e-9;
        let mut out = vec![0.0; p.dim()];
        let err = raspen_jacobian_apply(&p, &dec, &moved, &eval, &x, &mut out).unwrap_err();
        assert_eq!(err, crate::OcpError::StaleCorrections);
        raspen_jacobian_apply(&p, &dec, &x, &eval, &vec![0.0; p.dim()], &mut out).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn raspen_jacobian_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(9);
        let p = small_problem(16);
        let dec = decompose(p.grid(), 2, 2, 2).unwrap();
        let inner = InnerSolve::fixed(1e-2, 1e-12, 1.1).unwrap();
        let x = random_vec(p.dim(), &mut rng, 0.5);
        let d = random_vec(p.dim(), &mut rng, 1.0);
        let tau = 1e-5;
        let e0 = raspen_residual(&p, &dec, &x, &inner).unwrap();
        let xp: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + tau * b).collect();
        let e1 = raspen_residual(&p, &dec, &xp, &inner).unwrap();
        let mut jd = vec![0.0; p.dim()];
        raspen_jacobian_apply(&p, &dec, &x, &e0, &d, &mut jd).unwrap();
        let diff: Vec<f64> = (0..p.dim())
            .map(|i| (e1.value[i] - e0.value[i]) / tau - jd[i])
            .collect();
        let rel = norm2(&diff) / norm2(&jd);
        assert!(rel <= 1e-4, "{rel}");
    }

    #[test]
    fn raspen_matches_monolithic_newton() {
        let p = small_problem(16);
        let eps = 1e-4;
        let mono = newton_continuation(
            &MonolithicSystem::new(&p),
            vec![0.0; p.dim()],
            &ContinuationSchedule::new(1.0, eps, 0.2).unwrap(),
            &NewtonConfig::direct(),
            None,
        )
        .unwrap();
        assert!(mono.report.converged);
        let dec = decompose(p.grid(), 2, 2, 2).unwrap();
        let first = InnerSolve {
            sched: ContinuationSchedule::new(1.0, eps, 0.2).unwrap(),
            ..InnerSolve::fixed(eps, 1e-8, 1.1).unwrap()
        };
        let (x, rep) = raspen_solve(
            &p,
            &dec,
            vec![0.0; p.dim()],
            &first,
            &RaspenConfig::default(),
        )
        .unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!(rep.outer_iters <= 10);
        assert_eq!(rep.inner_iters.len(), rep.outer_iters + 1);
        let n = p.grid().len();
        assert!(max_abs_diff(&x[..n], &mono.x[..n]) < 1e-6);
    }

    #[test]
    fn ras_preconditioned_newton_matches_direct() {
        let p = small_problem(16);
        let dec = decompose(p.grid(), 2, 2, 2).unwrap();
        let factory = RasFactory {
            problem: &p,
            dec: &dec,
        };
        let sched = ContinuationSchedule::new(1.0, 1e-4, 0.2).unwrap();
        let sys = MonolithicSystem::new(&p);
        let ras = newton_continuation(
            &sys,
            vec![0.0; p.dim()],
            &sched,
            &NewtonConfig::default(),
            Some(&factory),
        )
        .unwrap();
        let plain = newton_continuation(
            &sys,
            vec![0.0; p.dim()],
            &sched,
            &NewtonConfig::default(),
            None,
        )
        .unwrap();
        let direct = newton_continuation(
            &sys,
            vec![0.0; p.dim()],
            &sched,
            &NewtonConfig::direct(),
            None,
        )
        .unwrap();
        assert!(ras.report.converged && plain.report.converged && direct.report.converged);
        assert!(ras.report.avg_gmres() < plain.report.avg_gmres());
        assert!(max_abs_diff(&ras.x, &direct.x) < 1e-8);
    }

    #[test]
    fn fixed_point_step_leaves_solution_in_place() {
        let grid = Grid::new(12).unwrap();
        let params = TestProblemParams {
            profile: crate::system::AdjointProfile::Oscillating { k_tilde: 1.0 },
            nu: 1e-2,
            eps_construct: 1e-3,
            ..TestProblemParams::default()
        };
        let tp = construct_test_problem(grid, &params).unwrap();
        let dec = decompose(&grid, 2, 3, 2).unwrap();
        let inner = InnerSolve::fixed(1e-3, 1e-8, 1.1).unwrap();
        let x = tp.reference.as_slice();
        let next = ras_fixed_point_step(&tp.problem, &dec, x, &inner).unwrap();
        assert!(max_abs_diff(&next, x) < 1e-8);
    }
}
