//! Seeded random inputs for the verification suites: transversal webs on the
//! unit square and monotone time-preserving point transformations.

use rand::rngs::StdRng;
use rand::Rng;

use crate::duality::TimePreservingPointTransform;
use crate::expr::build::{add, exp, lit, mul, scale, var};
use crate::expr::{ExprNode, Expression};
use crate::field::{Rect, ScalarField};
use crate::web::{from_3web, ProjParam, WebSpec};

fn vars_xy() -> Vec<String> {
    vec!["x".into(), "y".into()]
}

/// `c0 + c1 x + c2 y + c3 xy + c4 x^2 + c5 y^2` with the given coefficients.
fn quadratic(c: [f64; 6]) -> ExprNode {
    let x = || var(0);
    let y = || var(1);
    add(
        add(
            add(lit(c[0]), scale(c[1], x())),
            add(scale(c[2], y()), scale(c[3], mul(x(), y()))),
        ),
        add(scale(c[4], mul(x(), x())), scale(c[5], mul(y(), y()))),
    )
}

fn small_coeffs(rng: &mut StdRng, bound: f64) -> [f64; 6] {
    std::array::from_fn(|_| rng.random_range(-bound..bound))
}

/// A random transversal web on the unit square. Alternates between
/// potential-backed cubic perturbations of `x + y` and coframe pairs of
/// exponentials (always positive, hence transversal by construction);
/// candidates failing the grid check are skipped deterministically.
pub fn random_web(rng: &mut StdRng) -> WebSpec {
    let domain = Rect::unit();
    loop {
        let make_pair = rng.random_bool(0.5);
        if make_pair {
            let u = Expression::from_parts(vars_xy(), exp(quadratic(small_coeffs(rng, 0.4))));
            let v = Expression::from_parts(vars_xy(), exp(quadratic(small_coeffs(rng, 0.4))));
            let wx = ScalarField::new(u, domain).expect("two variables");
            let wy = ScalarField::new(v, domain).expect("two variables");
            if let Ok(web) = WebSpec::from_pair(wx, wy, ProjParam::affine(1.0)) {
                return web;
            }
        } else {
            // w = x + y + small quadratic/cubic terms keeps w_x, w_y near 1
            let c = small_coeffs(rng, 0.25);
            let x = || var(0);
            let y = || var(1);
            let node = add(
                add(x(), y()),
                add(
                    add(scale(c[0], mul(x(), y())), scale(c[1], mul(x(), x()))),
                    add(
                        add(
                            scale(c[2], mul(y(), y())),
                            scale(c[3], mul(mul(x(), x()), y())),
                        ),
                        add(
                            scale(c[4], mul(x(), mul(y(), y()))),
                            scale(c[5], mul(mul(x(), x()), x())),
                        ),
                    ),
                ),
            );
            let w = ScalarField::new(Expression::from_parts(vars_xy(), node), domain)
                .expect("two variables");
            if let Ok(web) = from_3web(w, ProjParam::affine(1.0)) {
                return web;
            }
        }
    }
}

/// A random monotone `psi(t, z) = a z + b t + c t z + d z^2 + e`, with the
/// coefficients constrained so `d psi/dz >= 0.3` on the given box.
pub fn random_point_transform(
    rng: &mut StdRng,
    t_range: [f64; 2],
    z_range: [f64; 2],
) -> TimePreservingPointTransform {
    loop {
        let a: f64 = rng.random_range(0.8..1.5);
        let b = rng.random_range(-0.5..0.5);
        let c: f64 = rng.random_range(-0.2..0.2);
        let d: f64 = rng.random_range(-0.15..0.15);
        let e = rng.random_range(-0.5..0.5);
        // psi_z = a + c t + 2 d z
        let t_abs = t_range[0].abs().max(t_range[1].abs());
        let z_abs = z_range[0].abs().max(z_range[1].abs());
        if a - c.abs() * t_abs - 2.0 * d.abs() * z_abs < 0.3 {
            continue;
        }
        let t = || var(0);
        let z = || var(1);
        let node = add(
            add(scale(a, z()), scale(b, t())),
            add(
                scale(c, mul(t(), z())),
                add(scale(d, mul(z(), z())), lit(e)),
            ),
        );
        let expr = Expression::from_parts(vec!["t".into(), "z".into()], node);
        if let Ok(tr) = TimePreservingPointTransform::new(expr, t_range, z_range) {
            return tr;
        }
    }
}
