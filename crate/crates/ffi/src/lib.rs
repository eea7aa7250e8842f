//! C interface to `ocp-core`.
//!
//! Objects cross the boundary as opaque pointers created by `ocp_*_new`-style
//! constructors and released with the matching `*_free`. Every fallible call
//! returns an [`OcpStatus`]; on failure a description is available from
//! [`ocp_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ocp_core::grid::{Field, Grid};
use ocp_core::harness::{solve_with, ExperimentConfig, Layout, LinearMode, Method};
use ocp_core::newton::SolveReport;
use ocp_core::smoothing::{smoothed_projection, SmoothingParam};
use ocp_core::system::{
    construct_test_problem, recover_control, residual_into, AdjointProfile, Problem,
    TestProblemParams,
};
use ocp_core::OcpError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NumericalFailure = 4,
    NotConverged = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcpMethod {
    Newton = 0,
    NewtonEps = 1,
    NewtonRas = 2,
    NewtonRasEps = 3,
    Raspen = 4,
    RaspenEps = 5,
}

impl From<OcpMethod> for Method {
    fn from(m: OcpMethod) -> Self {
        match m {
            OcpMethod::Newton => Method::Newton,
            OcpMethod::NewtonEps => Method::NewtonEps,
            OcpMethod::NewtonRas => Method::NewtonRas,
            OcpMethod::NewtonRasEps => Method::NewtonRasEps,
            OcpMethod::Raspen => Method::Raspen,
            OcpMethod::RaspenEps => Method::RaspenEps,
        }
    }
}

/// Parameters of the manufactured test problem.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OcpProblemParams {
    pub n: usize,
    pub kappa: f64,
    pub nu: f64,
    pub mu: f64,
    pub k_tilde: f64,
    pub eps_construct: f64,
}

/// Solver settings. `direct_linear` replaces GMRES by a banded LU in the
/// monolithic Newton methods.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OcpSolveOptions {
    pub method: OcpMethod,
    pub eps0: f64,
    pub eps_min: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub tol: f64,
    pub inner_tol: f64,
    pub subdomain_rows: usize,
    pub subdomain_cols: usize,
    pub overlap: usize,
    pub max_outer: usize,
    pub threads: usize,
    pub direct_linear: bool,
}

/// Opaque problem handle.
pub struct OcpProblem {
    problem: Problem,
    reference: Vec<f64>,
}

/// Opaque solution handle.
pub struct OcpSolution {
    x: Vec<f64>,
    report: SolveReport,
    control: Field,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &OcpError) -> OcpStatus {
    match err {
        OcpError::InvalidArgument(_) | OcpError::Config(_) => OcpStatus::InvalidArgument,
        OcpError::DimensionMismatch { .. } => OcpStatus::DimensionMismatch,
        _ => OcpStatus::NumericalFailure,
    }
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), (OcpStatus, String)>) -> OcpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OcpStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            OcpStatus::Panic
        }
    }
}

fn core_err(e: OcpError) -> (OcpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (OcpStatus, String) {
    (OcpStatus::NullPointer, format!("{what} is null"))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ocp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn ocp_problem_params_default() -> OcpProblemParams {
    let d = ExperimentConfig::default();
    OcpProblemParams {
        n: d.n,
        kappa: d.kappa,
        nu: d.nu,
        mu: d.mu,
        k_tilde: d.k_tilde,
        eps_construct: d.eps_construct,
    }
}

#[no_mangle]
pub extern "C" fn ocp_solve_options_default() -> OcpSolveOptions {
    let d = ExperimentConfig::default();
    OcpSolveOptions {
        method: OcpMethod::NewtonEps,
        eps0: d.eps0,
        eps_min: d.eps_min,
        gamma: d.gamma,
        sigma: d.sigma,
        tol: d.tol,
        inner_tol: d.inner_tol,
        subdomain_rows: d.layout().rows,
        subdomain_cols: d.layout().cols,
        overlap: d.overlap,
        max_outer: d.max_outer,
        threads: d.threads,
        direct_linear: false,
    }
}

/// Builds the manufactured problem whose exact discrete solution is known.
///
/// # Safety
/// `params` must point to a valid `OcpProblemParams` and `out` to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ocp_problem_new(
    params: *const OcpProblemParams,
    out: *mut *mut OcpProblem,
) -> OcpStatus {
    guard(|| {
        let params = unsafe { params.as_ref() }.ok_or_else(|| null("params"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let grid = Grid::new(params.n).map_err(core_err)?;
        let tp = construct_test_problem(
            grid,
            &TestProblemParams {
                kappa: params.kappa,
                nu: params.nu,
                mu: params.mu,
                profile: AdjointProfile::Oscillating {
                    k_tilde: params.k_tilde,
                },
                eps_construct: params.eps_construct,
            },
        )
        .map_err(core_err)?;
        let handle = Box::new(OcpProblem {
            problem: tp.problem,
            reference: tp.reference.into_vec(),
        });
        unsafe { *out = Box::into_raw(handle) };
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or a pointer returned by `ocp_problem_new` that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn ocp_problem_free(problem: *mut OcpProblem) {
    if !problem.is_null() {
        drop(unsafe { Box::from_raw(problem) });
    }
}

/// Length of the stacked `(y, p)` vector, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn ocp_problem_dim(problem: *const OcpProblem) -> usize {
    unsafe { problem.as_ref() }.map_or(0, |p| p.problem.dim())
}

/// Copies the manufactured `(y, p)` into `buf` of length `len`.
///
/// # Safety
/// `problem` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ocp_problem_reference(
    problem: *const OcpProblem,
    buf: *mut f64,
    len: usize,
) -> OcpStatus {
    guard(|| {
        let p = unsafe { problem.as_ref() }.ok_or_else(|| null("problem"))?;
        copy_out(&p.reference, buf, len)
    })
}

/// Evaluates the smoothed optimality residual at `x` into `out`.
///
/// # Safety
/// `x` and `out` must be valid for `len` reads and writes respectively.
#[no_mangle]
pub unsafe extern "C" fn ocp_residual(
    problem: *const OcpProblem,
    x: *const f64,
    eps: f64,
    out: *mut f64,
    len: usize,
) -> OcpStatus {
    guard(|| {
        let p = unsafe { problem.as_ref() }.ok_or_else(|| null("problem"))?;
        if x.is_null() || out.is_null() {
            return Err(null("buffer"));
        }
        let xs = unsafe { std::slice::from_raw_parts(x, len) };
        let os = unsafe { std::slice::from_raw_parts_mut(out, len) };
        residual_into(&p.problem, xs, eps, os).map_err(core_err)
    })
}

fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), (OcpStatus, String)> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len != src.len() {
        return Err((
            OcpStatus::DimensionMismatch,
            format!("buffer holds {len} values, need {}", src.len()),
        ));
    }
    unsafe { std::slice::from_raw_parts_mut(buf, len) }.copy_from_slice(src);
    Ok(())
}

fn config_from(problem: &Problem, opts: &OcpSolveOptions) -> ExperimentConfig {
    ExperimentConfig {
        method: opts.method.into(),
        n: problem.grid().n(),
        nu: problem.nu(),
        mu: problem.mu(),
        eps0: opts.eps0,
        eps_min: opts.eps_min,
        gamma: opts.gamma,
        sigma: opts.sigma,
        tol: opts.tol,
        inner_tol: opts.inner_tol,
        subdomains: vec![Layout {
            rows: opts.subdomain_rows,
            cols: opts.subdomain_cols,
        }],
        overlap: opts.overlap,
        max_outer: opts.max_outer,
        threads: opts.threads,
        linear: if opts.direct_linear {
            LinearMode::Direct
        } else {
            LinearMode::Gmres
        },
        ..ExperimentConfig::default()
    }
}

/// Solves `problem` from the zero initial guess. A solution handle is written
/// to `out` even when the iteration does not converge; the status is then
/// `NotConverged`.
///
/// # Safety
/// `problem` must be a live handle, `opts` null (defaults) or valid, and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ocp_solve(
    problem: *const OcpProblem,
    opts: *const OcpSolveOptions,
    out: *mut *mut OcpSolution,
) -> OcpStatus {
    let mut converged = true;
    let status = guard(|| {
        let p = unsafe { problem.as_ref() }.ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let opts = unsafe { opts.as_ref() }
            .copied()
            .unwrap_or_else(|| ocp_solve_options_default());
        let cfg = config_from(&p.problem, &opts);
        cfg.validate().map_err(core_err)?;
        let (x, report) = ocp_core::harness::experiments::with_threads(cfg.threads, || {
            solve_with(&p.problem, &cfg, vec![0.0; p.problem.dim()])
        })
        .and_then(|r| r)
        .map_err(core_err)?;
        let n = p.problem.grid().len();
        let pf = Field::new(*p.problem.grid(), x[n..].to_vec()).map_err(core_err)?;
        let eps = SmoothingParam::new(cfg.eps_min).map_err(core_err)?;
        let control = recover_control(&pf, &p.problem, eps);
        converged = report.converged;
        if !converged {
            set_error(format!("solver stopped: {:?}", report.status));
        }
        unsafe { *out = Box::into_raw(Box::new(OcpSolution { x, report, control })) };
        Ok(())
    });
    if status == OcpStatus::Ok && !converged {
        OcpStatus::NotConverged
    } else {
        status
    }
}

/// # Safety
/// `solution` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn ocp_solution_free(solution: *mut OcpSolution) {
    if !solution.is_null() {
        drop(unsafe { Box::from_raw(solution) });
    }
}

/// # Safety
/// `solution` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn ocp_solution_converged(solution: *const OcpSolution) -> bool {
    unsafe { solution.as_ref() }.is_some_and(|s| s.report.converged)
}

/// # Safety
/// `solution` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn ocp_solution_outer_iters(solution: *const OcpSolution) -> usize {
    unsafe { solution.as_ref() }.map_or(0, |s| s.report.outer_iters)
}

/// Last recorded residual norm, NaN for a null handle.
///
/// # Safety
/// `solution` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn ocp_solution_final_residual(solution: *const OcpSolution) -> f64 {
    unsafe { solution.as_ref() }.map_or(f64::NAN, |s| s.report.final_residual())
}

/// Copies the stacked `(y, p)` vector (length `ocp_problem_dim`).
///
/// # Safety
/// `solution` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ocp_solution_state_adjoint(
    solution: *const OcpSolution,
    buf: *mut f64,
    len: usize,
) -> OcpStatus {
    guard(|| {
        let s = unsafe { solution.as_ref() }.ok_or_else(|| null("solution"))?;
        copy_out(&s.x, buf, len)
    })
}

/// Copies the recovered control (length `ocp_problem_dim / 2`).
///
/// # Safety
/// `solution` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ocp_solution_control(
    solution: *const OcpSolution,
    buf: *mut f64,
    len: usize,
) -> OcpStatus {
    guard(|| {
        let s = unsafe { solution.as_ref() }.ok_or_else(|| null("solution"))?;
        copy_out(s.control.values(), buf, len)
    })
}

/// Solver report as JSON. Release with `ocp_string_free`; null on failure.
///
/// # Safety
/// `solution` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn ocp_solution_report_json(solution: *const OcpSolution) -> *mut c_char {
    let mut result = ptr::null_mut();
    guard(|| {
        let s = unsafe { solution.as_ref() }.ok_or_else(|| null("solution"))?;
        let json = serde_json::to_string(&s.report)
            .map_err(|e| (OcpStatus::NumericalFailure, e.to_string()))?;
        result = CString::new(json)
            .map_err(|e| (OcpStatus::NumericalFailure, e.to_string()))?
            .into_raw();
        Ok(())
    });
    result
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ocp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Smoothed projection onto `[-1, 1]`; NaN for negative or non-finite `eps`.
#[no_mangle]
pub extern "C" fn ocp_smoothed_projection(x: f64, eps: f64) -> f64 {
    SmoothingParam::new(eps).map_or(f64::NAN, |e| smoothed_projection(x, e))
}
