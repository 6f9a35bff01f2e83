//! Root finding: a 2x2 Newton iteration with finite-difference Jacobian, and
//! a bisection-then-Newton scheme for monotone scalar equations.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct NewtonControl {
    pub tol: f64,
    pub max_iter: usize,
    /// Forward-difference step for the Jacobian.
    pub jac_step: f64,
}

impl Default for NewtonControl {
    fn default() -> Self {
        NewtonControl {
            tol: 1e-9,
            max_iter: 50,
            jac_step: 1e-6,
        }
    }
}

/// Solves `f(x) = 0` for `x` in the plane. The residual is measured in the
/// max norm; the Jacobian comes from forward differences.
pub fn newton2(
    f: &mut dyn FnMut([f64; 2]) -> Result<[f64; 2]>,
    x0: [f64; 2],
    ctrl: &NewtonControl,
) -> Result<[f64; 2]> {
    let mut x = x0;
    let mut r = f(x)?;
    for _ in 0..ctrl.max_iter {
        let rn = r[0].abs().max(r[1].abs());
        if rn < ctrl.tol {
            return Ok(x);
        }
        if !rn.is_finite() {
            return Err(Error::NewtonDiverged("non-finite residual".into()));
        }
        let h = ctrl.jac_step;
        let fx = f([x[0] + h, x[1]])?;
        let fy = f([x[0], x[1] + h])?;
        let j = [
            [(fx[0] - r[0]) / h, (fy[0] - r[0]) / h],
            [(fx[1] - r[1]) / h, (fy[1] - r[1]) / h],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let scale = j[0][0]
            .abs()
            .max(j[0][1].abs())
            .max(j[1][0].abs())
            .max(j[1][1].abs());
        if det.abs() <= 1e-14 * scale * scale {
            return Err(Error::IllConditioned { det });
        }
        let dx = [
            (j[1][1] * r[0] - j[0][1] * r[1]) / det,
            (-j[1][0] * r[0] + j[0][0] * r[1]) / det,
        ];
        x = [x[0] - dx[0], x[1] - dx[1]];
        r = f(x)?;
    }
    let rn = r[0].abs().max(r[1].abs());
    Err(Error::NewtonDiverged(format!(
        "residual {rn:e} after max iterations"
    )))
}

/// Solves `f(y) = target` for a strictly monotone `f` on `[lo, hi]`:
/// bisection until the bracket is small, then Newton polishing with a
/// secant-estimated slope, falling back to bisection whenever Newton leaves
/// the bracket.
pub fn monotone_solve(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    target: f64,
    tol: f64,
) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a)? - target;
    let fb = f(b)? - target;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::InversionFailure(format!(
            "target {target} outside image [{:.6}, {:.6}] of [{lo}, {hi}]",
            fa + target,
            fb + target
        )));
    }
    // bisection phase
    let coarse = (hi - lo).abs() * 1e-3;
    while (b - a).abs() > coarse {
        let m = 0.5 * (a + b);
        let fm = f(m)? - target;
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    // Newton phase with secant slope
    let mut x = 0.5 * (a + b);
    let mut fx = f(x)? - target;
    for _ in 0..60 {
        if fx.abs() <= tol {
            return Ok(x);
        }
        let h = ((b - a).abs() * 1e-3).max(1e-12);
        let slope = (f(x + h)? - target - fx) / h;
        let mut next = if slope != 0.0 {
            x - fx / slope
        } else {
            f64::NAN
        };
        if !(next > a.min(b) && next < a.max(b)) {
            next = 0.5 * (a + b); // fall back to bisection
        }
        let fnext = f(next)? - target;
        if fnext.signum() == fa.signum() {
            a = next;
            fa = fnext;
        } else {
            b = next;
        }
        x = next;
        fx = fnext;
        if (b - a).abs() < 1e-15 * (1.0 + x.abs()) {
            return Ok(x);
        }
    }
    if fx.abs() <= tol * 10.0 {
        Ok(x)
    } else {
        Err(Error::InversionFailure(format!(
            "residual {fx:e} after max iterations"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_solves_quadratic_system() {
        let mut f = |x: [f64; 2]| Ok([x[0] * x[0] + x[1] - 2.0, x[0] - x[1]]);
        let sol = newton2(&mut f, [0.5, 0.5], &NewtonControl::default()).unwrap();
        // x^2 + x - 2 = 0 -> x = 1
        assert!((sol[0] - 1.0).abs() < 1e-8);
        assert!((sol[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn newton_reports_singular_jacobian() {
        let mut f = |x: [f64; 2]| Ok([x[0] + x[1], 2.0 * (x[0] + x[1]) - 1.0]);
        match newton2(&mut f, [0.0, 0.0], &NewtonControl::default()) {
            Err(Error::IllConditioned { .. }) => {}
            other => panic!("expected ill-conditioned error, got {other:?}"),
        }
    }

    #[test]
    fn monotone_solve_inverts_exponential() {
        let mut f = |y: f64| Ok(y.exp());
        let y = monotone_solve(&mut f, -2.0, 3.0, 2.5, 1e-13).unwrap();
        assert!((y - 2.5f64.ln()).abs() < 1e-11);
    }

    #[test]
    fn monotone_solve_rejects_out_of_image() {
        let mut f = |y: f64| Ok(y);
        assert!(matches!(
            monotone_solve(&mut f, 0.0, 1.0, 5.0, 1e-12),
            Err(Error::InversionFailure(_))
        ));
    }
}
