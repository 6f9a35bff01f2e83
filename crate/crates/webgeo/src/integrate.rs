//! Adaptive Dormand–Prince 5(4) embedded Runge–Kutta pair.
//!
//! One integrator serves leaf integration, geodesics, parallel transport and
//! the rectification quadrature. The right-hand side returns a `Result` so
//! that domain exits and singularities surface as structured errors instead
//! of NaNs; a failing stage first triggers step-halving retries (the stage may
//! simply have overshot the padded domain) before the error is propagated.

#![allow(clippy::type_complexity)]

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Initial step; `None` picks a fraction of the interval.
    pub h_init: Option<f64>,
    /// Minimum step as a fraction of the interval length.
    pub h_min_frac: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            h_init: None,
            h_min_frac: 1e-13,
            max_steps: 1_000_000,
        }
    }
}

impl StepControl {
    pub fn with_tol(rel_tol: f64, abs_tol: f64) -> StepControl {
        StepControl {
            rel_tol,
            abs_tol,
            ..StepControl::default()
        }
    }

    /// Tight control used by the duality pipeline, where results get divided
    /// by small finite-difference steps twice.
    pub fn tight() -> StepControl {
        StepControl::with_tol(1e-12, 1e-14)
    }
}

// Dormand-Prince coefficients.
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const B_STAR: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

/// Integrates `dy/ds = rhs(s, y)` from `s0` to `s_end` (either direction).
/// `on_accept` is called after every accepted step and may reject the new
/// state with an error (corridor checks, polyline capture).
pub fn integrate<const N: usize>(
    rhs: &mut dyn FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    s0: f64,
    y0: [f64; N],
    s_end: f64,
    ctrl: &StepControl,
    on_accept: &mut dyn FnMut(f64, &[f64; N]) -> Result<()>,
) -> Result<[f64; N]> {
    let span = s_end - s0;
    if span == 0.0 {
        return Ok(y0);
    }
    let dir = span.signum();
    let h_min = ctrl.h_min_frac * span.abs();
    let mut h = ctrl
        .h_init
        .map(|h| h.abs())
        .unwrap_or(span.abs() / 100.0)
        .min(span.abs())
        * dir;

    let mut s = s0;
    let mut y = y0;
    let mut k1 = rhs(s, &y)?;
    let mut steps = 0usize;

    while (s_end - s) * dir > 0.0 {
        steps += 1;
        if steps > ctrl.max_steps {
            return Err(Error::MaxSteps(ctrl.max_steps));
        }
        if h.abs() < h_min {
            return Err(Error::StepUnderflow { s });
        }
        if (s + h - s_end) * dir > 0.0 {
            h = s_end - s;
        }

        let stages = match dp_stages(rhs, s, &y, &k1, h) {
            Ok(st) => st,
            Err(_) if h.abs() > 16.0 * h_min => {
                // stage stepped somewhere unevaluable; retry smaller
                h *= 0.5;
                continue;
            }
            Err(e) => return Err(e),
        };
        let (y_new, k7) = (stages.0, stages.1);
        let err = stages.2;

        let mut err_norm_sq = 0.0;
        for i in 0..N {
            let sc = ctrl.abs_tol + ctrl.rel_tol * y[i].abs().max(y_new[i].abs());
            let r = err[i] / sc;
            err_norm_sq += r * r;
        }
        let err_norm = (err_norm_sq / N as f64).sqrt();

        if err_norm <= 1.0 {
            s += h;
            y = y_new;
            k1 = k7; // FSAL
            on_accept(s, &y)?;
        }
        let factor = if err_norm == 0.0 {
            5.0
        } else {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    Ok(y)
}

#[allow(clippy::type_complexity)]
fn dp_stages<const N: usize>(
    rhs: &mut dyn FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    s: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
) -> Result<([f64; N], [f64; N], [f64; N])> {
    fn axpy<const N: usize>(y: &[f64; N], h: f64, coeffs: &[f64], ks: &[[f64; N]]) -> [f64; N] {
        let mut out = *y;
        for (c, k) in coeffs.iter().zip(ks.iter()) {
            for i in 0..N {
                out[i] += h * c * k[i];
            }
        }
        out
    }

    let k2 = rhs(s + C[0] * h, &axpy(y, h, &A2, &[*k1]))?;
    let k3 = rhs(s + C[1] * h, &axpy(y, h, &A3, &[*k1, k2]))?;
    let k4 = rhs(s + C[2] * h, &axpy(y, h, &A4, &[*k1, k2, k3]))?;
    let k5 = rhs(s + C[3] * h, &axpy(y, h, &A5, &[*k1, k2, k3, k4]))?;
    let k6 = rhs(s + C[4] * h, &axpy(y, h, &A6, &[*k1, k2, k3, k4, k5]))?;
    let y_new = axpy(y, h, &B, &[*k1, k2, k3, k4, k5, k6]);
    let k7 = rhs(s + h, &y_new)?;

    let y_star = axpy(y, h, &B_STAR, &[*k1, k2, k3, k4, k5, k6, k7]);
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = y_new[i] - y_star[i];
    }
    Ok((y_new, k7, err))
}
