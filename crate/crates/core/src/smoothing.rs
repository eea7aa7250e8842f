//! Square-root smoothing of the clamp `proj_[-1,1]` and the penalty it induces.
//!
//! `P_ε(x) = ½(√((x+1)²+ε) − √((x−1)²+ε))` is evaluated through the
//! algebraically equal `2x / (√((x+1)²+ε) + √((x−1)²+ε))`, which is exactly
//! odd in floating point and free of cancellation for large `|x|`.
//!
//! The smooth penalty replacing `|u|` has derivative `d_ε`, defined implicitly
//! by `d = P_ε(d + (ν/μ)·x)`, and antiderivative `D_ε(x) = ∫₀ˣ d_ε`.

use crate::error::{OcpError, Result};

/// Smoothing parameter `ε ≥ 0`; zero means the exact projection.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SmoothingParam(f64);

impl SmoothingParam {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(OcpError::InvalidArgument(format!(
                "smoothing parameter must be finite and >= 0, got {eps}"
            )));
        }
        Ok(SmoothingParam(eps))
    }

    /// Like [`SmoothingParam::new`] but additionally rejects `ε = 0`.
    pub fn positive(eps: f64) -> Result<Self> {
        let s = Self::new(eps)?;
        if eps == 0.0 {
            return Err(OcpError::InvalidArgument(
                "smoothing parameter must be > 0 here".into(),
            ));
        }
        Ok(s)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// The ratio `ν/μ` scaling the control inside the penalty fixed point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyRatio(f64);

impl PenaltyRatio {
    pub fn new(ratio: f64) -> Result<Self> {
        if !(ratio > 0.0) || !ratio.is_finite() {
            return Err(OcpError::InvalidArgument(format!(
                "penalty ratio must be finite and > 0, got {ratio}"
            )));
        }
        Ok(PenaltyRatio(ratio))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Iteration cap for the scalar `d_ε` solve.
pub const PENALTY_MAX_ITERS: usize = 500;

#[inline]
pub(crate) fn p_eps(x: f64, eps: f64) -> f64 {
    let a = ((x + 1.0) * (x + 1.0) + eps).sqrt();
    let b = ((x - 1.0) * (x - 1.0) + eps).sqrt();
    (2.0 * x / (a + b)).clamp(-1.0, 1.0)
}

#[inline]
pub(crate) fn dp_eps(x: f64, eps: f64) -> f64 {
    // P'_ε is even; for |x| ≥ 1 write each term as 1 − u/√(u²+ε) to avoid cancellation
    let x = x.abs();
    if x >= 1.0 {
        let tail = |u: f64| {
            let r = (u * u + eps).sqrt();
            eps / (r * (r + u))
        };
        0.5 * (tail(x - 1.0) - tail(x + 1.0))
    } else {
        let g = |u: f64| u / (u * u + eps).sqrt();
        0.5 * (g(x + 1.0) - g(x - 1.0))
    }
}

pub fn project(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

pub fn smoothed_projection(x: f64, eps: SmoothingParam) -> f64 {
    p_eps(x, eps.0)
}

pub fn smoothed_projection_derivative(x: f64, eps: SmoothingParam) -> Result<f64> {
    if eps.0 == 0.0 {
        return Err(OcpError::InvalidArgument(
            "P'_ε is only defined for ε > 0".into(),
        ));
    }
    Ok(dp_eps(x, eps.0))
}

/// `|proj(x) − P_ε(x)| ≤ √ε`; always true, used as a property predicate.
pub fn projection_error_bound_check(x: f64, eps: SmoothingParam) -> bool {
    (project(x) - p_eps(x, eps.0)).abs() <= eps.0.sqrt()
}

/// Solves `d = P_ε(d + r·x)` for `d ∈ [-1, 1]` to `|d − P_ε(d + r·x)| ≤ tol`.
///
/// Fixed-point steps with Aitken extrapolation (Steffensen), safeguarded by
/// a bracket on the increasing function `g(d) = d − P_ε(d + r·x)`; a step that
/// fails to halve `|g|` falls back to bisection.
pub fn penalty_derivative(x: f64, eps: SmoothingParam, r: PenaltyRatio, tol: f64) -> Result<f64> {
    penalty_derivative_with_cap(x, eps, r, tol, PENALTY_MAX_ITERS)
}

pub fn penalty_derivative_with_cap(
    x: f64,
    eps: SmoothingParam,
    r: PenaltyRatio,
    tol: f64,
    max_iters: usize,
) -> Result<f64> {
    if eps.0 == 0.0 {
        return Err(OcpError::InvalidArgument("d_ε needs ε > 0".into()));
    }
    if !(tol > 0.0) {
        return Err(OcpError::InvalidArgument(format!(
            "tol must be > 0, got {tol}"
        )));
    }
    if !x.is_finite() {
        return Err(OcpError::NonFinite {
            what: "penalty derivative argument",
            index: 0,
        });
    }
    let e = eps.0;
    let shift = r.0 * x;
    let fp = |d: f64| p_eps(d + shift, e);
    let g = |d: f64| d - fp(d);

    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    let mut d = 0.0;
    let mut gd = g(d);
    for _ in 0..max_iters {
        if gd.abs() <= tol {
            return Ok(d);
        }
        if gd < 0.0 {
            lo = d;
        } else {
            hi = d;
        }
        let d1 = fp(d);
        let d2 = fp(d1);
        let denom = d2 - 2.0 * d1 + d;
        let mut cand = if denom != 0.0 {
            d - (d1 - d) * (d1 - d) / denom
        } else {
            d2
        };
        if !(cand > lo && cand < hi) {
            cand = if d2 > lo && d2 < hi {
                d2
            } else {
                0.5 * (lo + hi)
            };
        }
        let gc = g(cand);
        if gc.abs() > 0.5 * gd.abs() {
            if gc < 0.0 {
                lo = lo.max(cand);
            } else {
                hi = hi.min(cand);
            }
            let mid = 0.5 * (lo + hi);
            d = mid;
            gd = g(mid);
        } else {
            d = cand;
            gd = gc;
        }
    }
    if gd.abs() <= tol {
        return Ok(d);
    }
    Err(OcpError::IterationCap {
        what: "penalty derivative fixed point",
        cap: max_iters,
    })
}

/// `d'_ε(x) = r·P'_ε(z) / (1 − P'_ε(z))` with `z = d_ε(x) + r·x`.
pub fn penalty_derivative_slope(x: f64, eps: SmoothingParam, r: PenaltyRatio) -> Result<f64> {
    let d = penalty_derivative(x, eps, r, 1e-15)?;
    let dp = dp_eps(d + r.0 * x, eps.0);
    Ok(r.0 * dp / (1.0 - dp))
}

/// `D_ε(x) = ∫₀ˣ d_ε(s) ds` by adaptive Gauss–Kronrod (7/15) quadrature.
pub fn penalty_antiderivative(
    x: f64,
    eps: SmoothingParam,
    r: PenaltyRatio,
    quad_tol: f64,
) -> Result<f64> {
    if eps.0 == 0.0 {
        return Err(OcpError::InvalidArgument("D_ε needs ε > 0".into()));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let f = |s: f64| penalty_derivative(s, eps, r, 1e-15);
    let value = adaptive_gauss_kronrod(&f, 0.0, x, quad_tol)?;
    // D_ε ≥ 0; tiny negative rounding near x = 0 is clipped
    Ok(value.max(0.0))
}

// Kronrod 15-point abscissae and weights on [-1, 1] (QUADPACK qk15),
// the 7-point Gauss rule uses every other node.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let dx = half * XGK[k];
        let s = f(c - dx)? + f(c + dx)?;
        kronrod += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    Ok((kronrod * half, ((kronrod - gauss) * half).abs()))
}

fn adaptive_gauss_kronrod(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<f64> {
    const MAX_DEPTH: u32 = 60;
    let mut total = 0.0;
    let mut stack = vec![(a, b, tol, 0_u32)];
    while let Some((lo, hi, t, depth)) = stack.pop() {
        let (value, err) = gauss_kronrod_15(f, lo, hi)?;
        if err <= t || (hi - lo).abs() <= f64::EPSILON * lo.abs().max(hi.abs()) {
            total += value;
        } else if depth >= MAX_DEPTH {
            return Err(OcpError::Quadrature { a, b });
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * t, depth + 1));
            stack.push((mid, hi, 0.5 * t, depth + 1));
        }
    }
    Ok(total)
}
