//! The dual second-order ODE on the space of leaves, built by first-integral
//! elimination, the invariant whose vanishing characterizes such duals, and
//! the parameter transformations (Moebius maps of the independent variable,
//! time-preserving point transformations of the dependent one).
//!
//! The twistor coordinates are `(t, z)`: `t` is the foliation parameter and
//! `z` labels a leaf by its ordinate on the reference line `x = x_ref`. A
//! plane point `(x, y)` then traces the dual curve `t -> Z(t; x, y)`, and the
//! dual right-hand side `F(t, z, z')` is recovered by solving
//! `Z = z, dZ/dt = p` for `(x, y)` and returning `d2Z/dt2` there. The
//! invariant is
//!
//! ```text
//! K0 = -F_z + 1/2 X_F(F_p) - 1/4 F_p^2,    X_F = d_t + p d_z + F d_p
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::integrate::StepControl;
use crate::jet::{Jet, JetSpace};
use crate::solve::{monotone_solve, newton2, NewtonControl};
use crate::web::{ProjParam, WebSpec};

/// Numerical controls for the elimination pipeline.
///
/// The defaults are matched to stacked differentiation: the leaf integrator
/// runs at 1e-12 so that the 4th-order five-point stencils in `t` (step
/// `h_t`) leave about 1e-8 of noise in `F`, which the second-order `K0`
/// stencils (step `h_k0`) amplify to a few 1e-4 — inside the 1e-3 budget for
/// curved webs.
#[derive(Debug, Clone, Copy)]
pub struct DualControls {
    /// Reference line for the leaf coordinate `z`.
    pub x_ref: f64,
    /// Step of the five-point stencils for `dZ/dt`, `d2Z/dt2`.
    pub h_t: f64,
    /// Step of the `K0` finite-difference stencils on web-backed duals.
    pub h_k0: f64,
    pub integ: StepControl,
    pub newton: NewtonControl,
}

impl DualControls {
    /// Defaults anchored at the web's domain: `x_ref` sits a 2% margin in
    /// from the left edge.
    pub fn for_web(web: &WebSpec) -> DualControls {
        let d = web.domain();
        DualControls {
            x_ref: d.x_min + 0.02 * d.width(),
            h_t: 1e-2,
            h_k0: 1e-2,
            integ: StepControl::tight(),
            newton: NewtonControl::default(),
        }
    }
}

/// First integral of the foliation at `t`: the ordinate of the leaf through
/// `point` on the line `x = x_ref`. Constant along leaves by construction.
pub fn first_integral(
    web: &WebSpec,
    x_ref: f64,
    t: f64,
    point: (f64, f64),
    ctrl: &StepControl,
) -> Result<f64> {
    web.leaf_through(t, point, x_ref, ctrl)
}

/// Samples of the dual curve `t -> Z(t; point)`.
pub fn dual_curve(
    web: &WebSpec,
    x_ref: f64,
    point: (f64, f64),
    t_grid: &[f64],
    ctrl: &StepControl,
) -> Result<Vec<(f64, f64)>> {
    t_grid
        .iter()
        .map(|&t| Ok((t, first_integral(web, x_ref, t, point, ctrl)?)))
        .collect()
}

/// `Z` at `t + k h` for `k = -2..=2`.
fn z_stencil(web: &WebSpec, t: f64, point: (f64, f64), dc: &DualControls) -> Result<[f64; 5]> {
    let mut z = [0.0; 5];
    for (i, k) in (-2..=2).enumerate() {
        z[i] = first_integral(web, dc.x_ref, t + k as f64 * dc.h_t, point, &dc.integ)?;
    }
    Ok(z)
}

/// 4th-order five-point first and second derivatives in `t`.
fn stencil_derivs(z: &[f64; 5], h: f64) -> (f64, f64) {
    let zt = (-z[4] + 8.0 * z[3] - 8.0 * z[1] + z[0]) / (12.0 * h);
    let ztt = (-z[4] + 16.0 * z[3] - 30.0 * z[2] + 16.0 * z[1] - z[0]) / (12.0 * h * h);
    (zt, ztt)
}

/// Forward map of the elimination: the `(z, p)` coordinates of a plane point
/// on the dual of foliation parameter `t`, using the same stencils as
/// [`dual_rhs`] so forward generation and backward solving cancel exactly.
pub fn dual_forward(
    web: &WebSpec,
    t: f64,
    point: (f64, f64),
    dc: &DualControls,
) -> Result<(f64, f64)> {
    let z = z_stencil(web, t, point, dc)?;
    let (zt, _) = stencil_derivs(&z, dc.h_t);
    Ok((z[2], zt))
}

/// Solves the elimination system and returns both the recovered plane point
/// and the dual right-hand side value `F = d2Z/dt2` there.
pub fn dual_solve(
    web: &WebSpec,
    t: f64,
    z: f64,
    p: f64,
    dc: &DualControls,
    guess: Option<[f64; 2]>,
) -> Result<([f64; 2], f64)> {
    let domain = web.domain();
    let mut residual = |xy: [f64; 2]| -> Result<[f64; 2]> {
        let st = z_stencil(web, t, (xy[0], xy[1]), dc)?;
        let (zt, _) = stencil_derivs(&st, dc.h_t);
        Ok([st[2] - z, zt - p])
    };
    let start = guess.unwrap_or_else(|| {
        let (cx, cy) = domain.center();
        [cx, cy]
    });
    let solved = match newton2(&mut residual, start, &dc.newton) {
        Ok(xy) => xy,
        Err(_) => bisection_fallback(web, t, z, p, dc)?,
    };
    let st = z_stencil(web, t, (solved[0], solved[1]), dc)?;
    let (_, ztt) = stencil_derivs(&st, dc.h_t);
    Ok((solved, ztt))
}

/// Scans fixed-x slices, solving the z-equation by monotone bisection in `y`
/// and ranking slices by the `p` mismatch; the best slice seeds a final
/// Newton polish.
fn bisection_fallback(
    web: &WebSpec,
    t: f64,
    z: f64,
    p: f64,
    dc: &DualControls,
) -> Result<[f64; 2]> {
    let d = web.domain();
    let slices = 15;
    let margin = 0.02;
    let mut best: Option<([f64; 2], f64)> = None;
    for i in 0..=slices {
        let x = d.x_min + d.width() * (margin + (1.0 - 2.0 * margin) * i as f64 / slices as f64);
        let mut zy = |y: f64| first_integral(web, dc.x_ref, t, (x, y), &dc.integ);
        let y = match monotone_solve(
            &mut zy,
            d.y_min + 1e-9 * d.height(),
            d.y_max - 1e-9 * d.height(),
            z,
            1e-10,
        ) {
            Ok(y) => y,
            Err(_) => continue,
        };
        let st = match z_stencil(web, t, (x, y), dc) {
            Ok(st) => st,
            Err(_) => continue,
        };
        let (zt, _) = stencil_derivs(&st, dc.h_t);
        let err = (zt - p).abs();
        if best.is_none_or(|(_, e)| err < e) {
            best = Some(([x, y], err));
        }
    }
    let (seed, _) = best.ok_or_else(|| {
        Error::NewtonDiverged(format!(
            "elimination target (t={t}, z={z}, p={p}) outside the solvable region"
        ))
    })?;
    let mut residual = |xy: [f64; 2]| -> Result<[f64; 2]> {
        let st = z_stencil(web, t, (xy[0], xy[1]), dc)?;
        let (zt, _) = stencil_derivs(&st, dc.h_t);
        Ok([st[2] - z, zt - p])
    };
    newton2(&mut residual, seed, &dc.newton)
}

/// Dual right-hand side `F(t, z, p)` by first-integral elimination.
pub fn dual_rhs(web: &WebSpec, t: f64, z: f64, p: f64, dc: &DualControls) -> Result<f64> {
    Ok(dual_solve(web, t, z, p, dc, None)?.1)
}

// ---- the dual ODE as an evaluatable object ----------------------------------

/// A second-order ODE `z'' = F(t, z, z')` on the twistor space.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum DualODE {
    /// Expression in `(t, z, p)`; exact jets.
    Expr(Expression),
    /// Numerically backed by a web through the elimination procedure.
    WebBacked { web: WebSpec, dc: DualControls },
    /// Image of another dual under a time-preserving point transformation.
    Transformed {
        inner: Box<DualODE>,
        psi: TimePreservingPointTransform,
    },
}

impl DualODE {
    pub fn from_expr_text(text: &str) -> Result<DualODE> {
        Ok(DualODE::Expr(Expression::parse(text, &["t", "z", "p"])?))
    }

    pub fn web_backed(web: WebSpec) -> DualODE {
        let dc = DualControls::for_web(&web);
        DualODE::WebBacked { web, dc }
    }

    pub fn eval(&self, t: f64, z: f64, p: f64) -> Result<f64> {
        match self {
            DualODE::Expr(e) => e.eval_value(&[t, z, p]),
            DualODE::WebBacked { web, dc } => dual_rhs(web, t, z, p, dc),
            DualODE::Transformed { inner, psi } => {
                let zi = psi.invert(t, z)?;
                let pj = psi.jet(t, zi, 2)?;
                let (psi_t, psi_z) = (pj.d1(0), pj.d1(1));
                let (psi_tt, psi_tz, psi_zz) = (pj.d2(0, 0), pj.d2(0, 1), pj.d2(1, 1));
                let pi = (p - psi_t) / psi_z;
                let f = inner.eval(t, zi, pi)?;
                Ok(psi_tt + 2.0 * psi_tz * pi + psi_zz * pi * pi + psi_z * f)
            }
        }
    }

    /// Jet evaluation at jet arguments (all in one space); `None` when the
    /// chain contains a web-backed member, which only evaluates pointwise.
    pub fn eval_jet_args(&self, args: &[Jet; 3]) -> Result<Option<Jet>> {
        match self {
            DualODE::Expr(e) => {
                let space = args[0].space();
                Ok(Some(e.eval_jet(space, &args[..])?))
            }
            DualODE::WebBacked { .. } => Ok(None),
            DualODE::Transformed { inner, psi } => {
                let space = args[0].space();
                let (t0, zt0) = (args[0].value(), args[1].value());
                // numeric root first, then implicit-function jets
                let z0 = psi.invert(t0, zt0)?;
                let poly = psi.jet(t0, z0, 4)?;
                let dt = args[0].sub(&Jet::constant(space, t0));
                // Newton on jets: z = z - (psi(t, z) - z~)/psi_z(t, z)
                let psi_z_poly = poly.deriv(1);
                let mut zj = Jet::constant(space, z0);
                for _ in 0..3 {
                    let dz = zj.sub(&Jet::constant(space, z0));
                    let val = poly.eval_at_displacements(&[dt, dz])?;
                    let der = psi_z_poly.eval_at_displacements(&[dt, dz])?;
                    let update = val.sub(&args[1]).div(&der)?;
                    zj = zj.sub(&update).with_value(z0);
                }
                let dz = zj.sub(&Jet::constant(space, z0));
                let at = |q: &Jet| q.eval_at_displacements(&[dt, dz]);
                let psi_t = at(&poly.deriv(0))?;
                let psi_z = at(&psi_z_poly)?;
                let psi_tt = at(&poly.deriv(0).deriv(0))?;
                let psi_tz = at(&poly.deriv(0).deriv(1))?;
                let psi_zz = at(&psi_z_poly.deriv(1))?;
                let pj = args[2].sub(&psi_t).div(&psi_z)?;
                let inner_jet = match inner.eval_jet_args(&[args[0], zj, pj])? {
                    Some(j) => j,
                    None => return Ok(None),
                };
                let out = psi_tt
                    .add(&psi_tz.mul(&pj).scale(2.0))
                    .add(&psi_zz.mul(&pj.mul(&pj)))
                    .add(&psi_z.mul(&inner_jet));
                Ok(Some(out))
            }
        }
    }

    /// Order-2 jet of `F` at a point when the chain supports jets.
    pub fn jet2(&self, t: f64, z: f64, p: f64) -> Result<Option<Jet>> {
        let space = JetSpace::get(3, 2);
        self.eval_jet_args(&[
            Jet::variable(space, 0, t),
            Jet::variable(space, 1, z),
            Jet::variable(space, 2, p),
        ])
    }
}

/// The invariant `K0 = -F_z + 1/2 X_F(F_p) - 1/4 F_p^2`. Jet-backed duals are
/// differentiated exactly; web-backed duals fall back to central differences
/// with the steps in their controls.
pub fn k0(f: &DualODE, t: f64, z: f64, p: f64) -> Result<f64> {
    if let Some(j) = f.jet2(t, z, p)? {
        let fv = j.value();
        let fz = j.d1(1);
        let fp = j.d1(2);
        let ftp = j.d2(0, 2);
        let fzp = j.d2(1, 2);
        let fpp = j.d2(2, 2);
        return Ok(-fz + 0.5 * (ftp + p * fzp + fv * fpp) - 0.25 * fp * fp);
    }
    let h = match f {
        DualODE::WebBacked { dc, .. } => dc.h_k0,
        _ => 1e-2,
    };
    k0_fd(f, t, z, p, h)
}

/// Finite-difference `K0` with an explicit stencil step.
pub fn k0_fd(f: &DualODE, t: f64, z: f64, p: f64, h: f64) -> Result<f64> {
    let e = |tt: f64, zz: f64, pp: f64| f.eval(tt, zz, pp);
    let f0 = e(t, z, p)?;
    let fz = (e(t, z + h, p)? - e(t, z - h, p)?) / (2.0 * h);
    let fp_hi = e(t, z, p + h)?;
    let fp_lo = e(t, z, p - h)?;
    let fp = (fp_hi - fp_lo) / (2.0 * h);
    let fpp = (fp_hi - 2.0 * f0 + fp_lo) / (h * h);
    let ftp = (e(t + h, z, p + h)? - e(t + h, z, p - h)? - e(t - h, z, p + h)?
        + e(t - h, z, p - h)?)
        / (4.0 * h * h);
    let fzp = (e(t, z + h, p + h)? - e(t, z + h, p - h)? - e(t, z - h, p + h)?
        + e(t, z - h, p - h)?)
        / (4.0 * h * h);
    Ok(-fz + 0.5 * (ftp + p * fzp + f0 * fpp) - 0.25 * fp * fp)
}

/// Web-backed `K0` with warm-started elimination: evaluates the 13-point `F`
/// stencil reusing the center solution as the Newton seed for the neighbors.
/// Returns the invariant and the recovered center point.
pub fn k0_web(
    web: &WebSpec,
    dc: &DualControls,
    t: f64,
    z: f64,
    p: f64,
    guess: Option<[f64; 2]>,
) -> Result<(f64, [f64; 2])> {
    let h = dc.h_k0;
    let (center, f0) = dual_solve(web, t, z, p, dc, guess)?;
    let seed = Some(center);
    let e =
        |tt: f64, zz: f64, pp: f64| -> Result<f64> { Ok(dual_solve(web, tt, zz, pp, dc, seed)?.1) };
    let fz = (e(t, z + h, p)? - e(t, z - h, p)?) / (2.0 * h);
    let fp_hi = e(t, z, p + h)?;
    let fp_lo = e(t, z, p - h)?;
    let fp = (fp_hi - fp_lo) / (2.0 * h);
    let fpp = (fp_hi - 2.0 * f0 + fp_lo) / (h * h);
    let ftp = (e(t + h, z, p + h)? - e(t + h, z, p - h)? - e(t - h, z, p + h)?
        + e(t - h, z, p - h)?)
        / (4.0 * h * h);
    let fzp = (e(t, z + h, p + h)? - e(t, z + h, p - h)? - e(t, z - h, p + h)?
        + e(t, z - h, p - h)?)
        / (4.0 * h * h);
    let k = -fz + 0.5 * (ftp + p * fzp + f0 * fpp) - 0.25 * fp * fp;
    Ok((k, center))
}

// ---- Moebius maps of the independent variable --------------------------------

/// `t -> (a t + b)/(c t + d)` with `ad - bc != 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoebiusMap {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl MoebiusMap {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<MoebiusMap> {
        let det = a * d - b * c;
        let scale = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
        if det.abs() <= 1e-12 * scale * scale {
            return Err(Error::InvalidParameter(format!(
                "degenerate Moebius map: ad - bc = {det}"
            )));
        }
        Ok(MoebiusMap { a, b, c, d })
    }

    pub fn identity() -> MoebiusMap {
        MoebiusMap {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: 1.0,
        }
    }

    /// `t -> 1/t`, swapping the roles of the foliations at 0 and infinity.
    pub fn inversion() -> MoebiusMap {
        MoebiusMap {
            a: 0.0,
            b: 1.0,
            c: 1.0,
            d: 0.0,
        }
    }

    pub fn is_affine(&self) -> bool {
        self.c == 0.0
    }

    /// Image of a projective parameter: `(s:t) -> (ds + ct : bs + at)`.
    pub fn apply(&self, p: ProjParam) -> ProjParam {
        ProjParam::new(
            self.d * p.s() + self.c * p.t(),
            self.b * p.s() + self.a * p.t(),
        )
        .expect("nondegenerate map preserves P^1")
    }

    /// Preimage under the map.
    pub fn apply_inverse(&self, p: ProjParam) -> ProjParam {
        ProjParam::new(
            self.a * p.s() - self.c * p.t(),
            -self.b * p.s() + self.d * p.t(),
        )
        .expect("nondegenerate map preserves P^1")
    }

    pub fn apply_affine(&self, t: f64) -> Option<f64> {
        self.apply(ProjParam::affine(t)).affine_value()
    }

    /// `self o other` as maps of `t`.
    pub fn compose(&self, other: &MoebiusMap) -> MoebiusMap {
        MoebiusMap {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
        }
    }
}

/// Reparametrizes the web family: the result's foliation at `m(t)` is the
/// input's at `t`. Realized by pulling the parameter back through the map, so
/// the family stays linear in the projective parameter.
pub fn apply_moebius(web: &WebSpec, m: &MoebiusMap) -> Result<WebSpec> {
    web.reparametrized(m)
}

// ---- time-preserving point transformations -----------------------------------

/// `z~ = psi(t, z)` with `d psi/dz` non-vanishing on a `(t, z)` box: a
/// fiberwise diffeomorphism over fixed `t`.
#[derive(Debug, Clone)]
pub struct TimePreservingPointTransform {
    psi: Expression,
    pub t_range: [f64; 2],
    pub z_range: [f64; 2],
}

impl TimePreservingPointTransform {
    pub fn new(
        psi: Expression,
        t_range: [f64; 2],
        z_range: [f64; 2],
    ) -> Result<TimePreservingPointTransform> {
        if psi.vars().len() != 2 {
            return Err(Error::InvalidParameter(
                "psi must be an expression in (t, z)".into(),
            ));
        }
        let tr = TimePreservingPointTransform {
            psi,
            t_range,
            z_range,
        };
        // d_z psi must be bounded away from zero with a stable sign
        let mut sign = 0.0;
        for i in 0..16 {
            for j in 0..16 {
                let t = t_range[0] + (t_range[1] - t_range[0]) * i as f64 / 15.0;
                let z = z_range[0] + (z_range[1] - z_range[0]) * j as f64 / 15.0;
                let dz = tr.jet(t, z, 1)?.d1(1);
                if dz == 0.0 || !dz.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "d psi/dz vanishes at ({t}, {z})"
                    )));
                }
                if sign == 0.0 {
                    sign = dz.signum();
                } else if dz.signum() != sign {
                    return Err(Error::InvalidParameter(format!(
                        "d psi/dz changes sign at ({t}, {z})"
                    )));
                }
            }
        }
        Ok(tr)
    }

    pub fn parse(
        text: &str,
        t_range: [f64; 2],
        z_range: [f64; 2],
    ) -> Result<TimePreservingPointTransform> {
        TimePreservingPointTransform::new(Expression::parse(text, &["t", "z"])?, t_range, z_range)
    }

    pub fn value(&self, t: f64, z: f64) -> Result<f64> {
        self.psi.eval_value(&[t, z])
    }

    fn jet(&self, t: f64, z: f64, order: usize) -> Result<Jet> {
        let space = JetSpace::get(2, order);
        self.psi.eval_jet(
            space,
            &[Jet::variable(space, 0, t), Jet::variable(space, 1, z)],
        )
    }

    /// Jacobian row `(psi_t, psi_z)` at a point.
    pub fn gradient(&self, t: f64, z: f64) -> Result<(f64, f64)> {
        let j = self.jet(t, z, 1)?;
        Ok((j.d1(0), j.d1(1)))
    }

    /// Forward image of a `(z, p)` pair over fixed `t`.
    pub fn push(&self, t: f64, z: f64, p: f64) -> Result<(f64, f64)> {
        let j = self.jet(t, z, 1)?;
        Ok((j.value(), j.d1(0) + j.d1(1) * p))
    }

    /// Solves `psi(t, .) = z_tilde` on the declared z-range.
    pub fn invert(&self, t: f64, z_tilde: f64) -> Result<f64> {
        let mut f = |z: f64| self.value(t, z);
        let z = monotone_solve(&mut f, self.z_range[0], self.z_range[1], z_tilde, 1e-13)?;
        // one exact Newton polish so downstream jets expand at the true root
        let j = self.jet(t, z, 1)?;
        Ok(z - (j.value() - z_tilde) / j.d1(1))
    }
}

/// Transports a dual ODE through `z~ = psi(t, z)`: solutions map to
/// solutions, with
/// `F~ = psi_tt + 2 psi_tz p + psi_zz p^2 + psi_z F` pulled back through the
/// fiberwise inverse. Applies to jet-evaluatable duals (expression-backed or
/// already-transformed); web-backed duals only evaluate pointwise.
pub fn apply_point_transform(f: &DualODE, psi: TimePreservingPointTransform) -> Result<DualODE> {
    if matches!(f, DualODE::WebBacked { .. }) {
        return Err(Error::InvalidParameter(
            "apply_point_transform expects a jet-evaluatable (expression-backed) dual".into(),
        ));
    }
    Ok(DualODE::Transformed {
        inner: Box::new(f.clone()),
        psi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection::constant_curvature_web;
    use crate::field::Rect;
    use crate::web::flat_web;
    use approx::assert_relative_eq;

    fn flat_on_big_domain() -> WebSpec {
        flat_web(Rect::new(0.0, 1.0, -1.0, 2.0).unwrap())
    }

    #[test]
    fn flat_first_integral_closed_form() {
        // z = y + t (x - x_ref)
        let web = flat_on_big_domain();
        let ctrl = StepControl::default();
        let x_ref = 0.02;
        for &(t, x, y) in &[(0.5, 0.6, 0.3), (1.0, 0.9, 0.1), (0.0, 0.4, 0.8)] {
            let z = first_integral(&web, x_ref, t, (x, y), &ctrl).unwrap();
            assert_relative_eq!(z, y + t * (x - x_ref), epsilon = 1e-12);
        }
        // a point already on the reference line
        let z = first_integral(&web, 0.25, 0.7, (0.25, 0.33), &ctrl).unwrap();
        assert_eq!(z, 0.33);
    }

    #[test]
    fn dual_curve_of_flat_web_is_affine_in_t() {
        let web = flat_on_big_domain();
        let (x, y) = (0.7, 0.2);
        let x_ref = 0.02;
        let ts: Vec<f64> = (0..9).map(|i| 0.1 * i as f64).collect();
        let pts = dual_curve(&web, x_ref, (x, y), &ts, &StepControl::default()).unwrap();
        for (t, z) in pts {
            assert_relative_eq!(z, y + t * (x - x_ref), epsilon = 1e-11);
        }
        // a point on the reference line has a constant dual curve
        let pts = dual_curve(&web, x_ref, (x_ref, 0.4), &ts, &StepControl::default()).unwrap();
        for (_, z) in pts {
            assert_eq!(z, 0.4);
        }
    }

    #[test]
    fn dual_curve_is_smooth_for_curved_webs() {
        // second difference quotients of t -> z(t) stay bounded, and the
        // horizontal foliation (t = 0) fixes the ordinate
        let web = constant_curvature_web(1.0, Rect::unit());
        let ctrl = StepControl::tight();
        let x_ref = 0.02;
        let (x, y) = (0.45, 0.5);
        let z0 = first_integral(&web, x_ref, 0.0, (x, y), &ctrl).unwrap();
        assert_relative_eq!(z0, y, epsilon = 1e-12);

        let h = 0.02;
        let ts: Vec<f64> = (0..=15).map(|i| 0.02 + h * i as f64).collect();
        let pts = dual_curve(&web, x_ref, (x, y), &ts, &ctrl).unwrap();
        let mut quotients = Vec::new();
        for w in pts.windows(3) {
            let q = (w[2].1 - 2.0 * w[1].1 + w[0].1) / (h * h);
            quotients.push(q);
        }
        for q in &quotients {
            assert!(q.abs() < 10.0, "second quotient {q} out of bounds");
        }
        // neighboring quotients agree to O(h): the sampled curve is smooth
        for w in quotients.windows(2) {
            assert!((w[1] - w[0]).abs() < 1.0);
        }
    }

    #[test]
    fn forward_backward_recovery() {
        let web = constant_curvature_web(1.0, Rect::unit());
        let dc = DualControls::for_web(&web);
        let (t, x, y) = (0.3, 0.45, 0.55);
        let (z, p) = dual_forward(&web, t, (x, y), &dc).unwrap();
        let (pt, _f) = dual_solve(&web, t, z, p, &dc, None).unwrap();
        assert_relative_eq!(pt[0], x, epsilon = 1e-7);
        assert_relative_eq!(pt[1], y, epsilon = 1e-7);
    }

    #[test]
    fn flat_dual_rhs_vanishes() {
        let web = flat_on_big_domain();
        let dc = DualControls::for_web(&web);
        for &(t, x, y) in &[(0.2, 0.3, 0.4), (0.5, 0.6, 0.6), (0.8, 0.5, 0.1)] {
            let (z, p) = dual_forward(&web, t, (x, y), &dc).unwrap();
            let f = dual_rhs(&web, t, z, p, &dc).unwrap();
            assert!(f.abs() < 1e-6, "F = {f} at t={t}");
        }
    }

    #[test]
    fn bisection_fallback_recovers_from_bad_guess() {
        // flat web on the tight unit square: the guessed point's leaf exits
        // the domain, so Newton cannot even evaluate its first residual and
        // the fixed-x slice scan must take over
        let web = flat_web(Rect::unit());
        let dc = DualControls::for_web(&web);
        let (t, x, y) = (0.2, 0.3, 0.5);
        let (z, p) = dual_forward(&web, t, (x, y), &dc).unwrap();
        let (pt, f) = dual_solve(&web, t, z, p, &dc, Some([0.9, 0.97])).unwrap();
        assert_relative_eq!(pt[0], x, epsilon = 1e-7);
        assert_relative_eq!(pt[1], y, epsilon = 1e-7);
        assert!(f.abs() < 1e-6);
    }

    #[test]
    fn unsolvable_query_is_an_error() {
        let web = flat_on_big_domain();
        let dc = DualControls::for_web(&web);
        // z far outside the image of the domain
        match dual_rhs(&web, 0.3, 50.0, 0.5, &dc) {
            Err(_) => {}
            Ok(f) => panic!("expected failure, got F = {f}"),
        }
    }

    #[test]
    fn k0_unit_identities() {
        // F = 0 -> K0 = 0; F = z -> K0 = -1; F = p^2 -> K0 = 0 (all exact)
        let zero = DualODE::from_expr_text("0*t").unwrap();
        assert_eq!(k0(&zero, 0.3, 0.1, 0.7).unwrap(), 0.0);
        let fz = DualODE::from_expr_text("z").unwrap();
        for &(t, z, p) in &[(0.0, 0.0, 0.0), (1.0, -2.0, 3.0), (0.3, 0.4, -0.7)] {
            assert_eq!(k0(&fz, t, z, p).unwrap(), -1.0);
        }
        let fp2 = DualODE::from_expr_text("p^2").unwrap();
        for &(t, z, p) in &[(0.0, 0.0, 0.5), (1.0, 2.0, -1.5)] {
            assert_eq!(k0(&fp2, t, z, p).unwrap(), 0.0);
        }
    }

    #[test]
    fn k0_fd_matches_jets_on_expressions() {
        let f = DualODE::from_expr_text("z*p + sin(t)*z^2").unwrap();
        let (t, z, p) = (0.4, 0.3, -0.6);
        let exact = k0(&f, t, z, p).unwrap();
        let fd = k0_fd(&f, t, z, p, 1e-4).unwrap();
        assert_relative_eq!(exact, fd, epsilon = 1e-6);
    }

    #[test]
    fn moebius_map_algebra() {
        let m = MoebiusMap::new(2.0, 0.3, 0.4, 1.0).unwrap();
        let t = 0.7;
        let mt = m.apply_affine(t).unwrap();
        assert_relative_eq!(mt, (2.0 * t + 0.3) / (0.4 * t + 1.0), epsilon = 1e-15);
        let back = m.apply_inverse(ProjParam::affine(mt));
        assert_relative_eq!(back.affine_value().unwrap(), t, epsilon = 1e-12);
        let id = MoebiusMap::identity();
        let comp = m.compose(&id);
        assert_eq!(comp, m);
        assert!(!MoebiusMap::new(1.0, 2.0, 0.3, 1.0).unwrap().is_affine());
        assert!(MoebiusMap::new(2.0, 1.0, 2.0, 1.0).is_err()); // ad = bc
    }

    #[test]
    fn moebius_identity_preserves_web() {
        let web = flat_web(Rect::unit());
        let new = apply_moebius(&web, &MoebiusMap::identity()).unwrap();
        for &t in &[0.0, 0.5, 2.0] {
            let d0 = web.leaf_direction(ProjParam::affine(t), 0.3, 0.6).unwrap();
            let d1 = new.leaf_direction(ProjParam::affine(t), 0.3, 0.6).unwrap();
            let cross = d0[0] * d1[1] - d0[1] * d1[0];
            assert!(cross.abs() < 1e-13);
        }
    }

    #[test]
    fn moebius_inversion_swaps_axes() {
        let web = flat_web(Rect::unit());
        let new = apply_moebius(&web, &MoebiusMap::inversion()).unwrap();
        // at t = 0 the new web's foliation is the old one at infinity: ker dx
        let d = new
            .leaf_direction(ProjParam::affine(0.0), 0.5, 0.5)
            .unwrap();
        assert_eq!(d[0], 0.0);
        let d = new.leaf_direction(ProjParam::infinity(), 0.5, 0.5).unwrap();
        assert_eq!(d[1], 0.0);
    }

    #[test]
    fn moebius_relabels_foliations() {
        // the new web's foliation at m(t) is the old one's at t
        let web = constant_curvature_web(1.0, Rect::unit());
        let m = MoebiusMap::new(2.0, 0.1, 0.3, 1.0).unwrap();
        let new = apply_moebius(&web, &m).unwrap();
        for &t in &[-0.5, 0.0, 0.4, 1.0, 2.0] {
            for &(x, y) in &[(0.2, 0.3), (0.5, 0.8), (0.9, 0.4)] {
                let old_dir = web.leaf_direction(ProjParam::affine(t), x, y).unwrap();
                let new_dir = new
                    .leaf_direction(m.apply(ProjParam::affine(t)), x, y)
                    .unwrap();
                let cross = old_dir[0] * new_dir[1] - old_dir[1] * new_dir[0];
                let scale = old_dir[0].hypot(old_dir[1]) * new_dir[0].hypot(new_dir[1]);
                assert!(cross.abs() < 1e-12 * scale, "t={t} ({x},{y})");
            }
        }
        // t2 is relabeled accordingly
        assert!(new.t2().approx_eq(&m.apply(web.t2()), 1e-12));
    }

    #[test]
    fn point_transform_identity_and_shift() {
        let f = DualODE::from_expr_text("z*p").unwrap();
        let idm = TimePreservingPointTransform::parse("z", [0.0, 1.0], [-2.0, 2.0]).unwrap();
        let tf = apply_point_transform(&f, idm).unwrap();
        for &(t, z, p) in &[(0.2, 0.5, 0.3), (0.8, -1.0, 1.2)] {
            assert_relative_eq!(
                tf.eval(t, z, p).unwrap(),
                f.eval(t, z, p).unwrap(),
                epsilon = 1e-10
            );
        }

        // F = 0 and a constant shift: still 0
        let zero = DualODE::from_expr_text("0*t").unwrap();
        let shift =
            TimePreservingPointTransform::parse("z + 0.7", [0.0, 1.0], [-2.0, 2.0]).unwrap();
        let tz = apply_point_transform(&zero, shift).unwrap();
        assert!(tz.eval(0.3, 0.2, 0.4).unwrap().abs() < 1e-12);
    }

    #[test]
    fn exp_transform_of_trivial_dual() {
        // F = 0, psi = e^z: solutions z = a + bt map to z~ = e^{a+bt} which
        // satisfies z~'' = (z~')^2/z~, so F~ = p^2/z~.
        let zero = DualODE::from_expr_text("0*t").unwrap();
        let psi = TimePreservingPointTransform::parse("exp(z)", [0.0, 1.0], [-2.0, 2.0]).unwrap();
        let tf = apply_point_transform(&zero, psi).unwrap();
        for &(t, zt, pt) in &[(0.2, 1.3, 0.4), (0.7, 2.0, -0.5), (0.5, 0.8, 0.1)] {
            let f = tf.eval(t, zt, pt).unwrap();
            assert_relative_eq!(f, pt * pt / zt, max_relative = 1e-9);
            // K0 of the transformed dual vanishes (jet path)
            let kk = k0(&tf, t, zt, pt).unwrap();
            assert!(kk.abs() < 1e-10, "K0 = {kk}");
        }
    }

    #[test]
    fn transformed_jets_match_finite_differences() {
        let f = DualODE::from_expr_text("p^2").unwrap();
        let psi =
            TimePreservingPointTransform::parse("z + 0.2*t*z + 0.1*z^2", [0.0, 1.0], [-2.0, 2.0])
                .unwrap();
        let tf = apply_point_transform(&f, psi).unwrap();
        let (t, z, p) = (0.4, 0.6, 0.3);
        let j = tf.jet2(t, z, p).unwrap().unwrap();
        assert_relative_eq!(j.value(), tf.eval(t, z, p).unwrap(), epsilon = 1e-11);
        let h = 1e-5;
        let fd_z = (tf.eval(t, z + h, p).unwrap() - tf.eval(t, z - h, p).unwrap()) / (2.0 * h);
        assert_relative_eq!(j.d1(1), fd_z, max_relative = 1e-6);
        let fd_t = (tf.eval(t + h, z, p).unwrap() - tf.eval(t - h, z, p).unwrap()) / (2.0 * h);
        assert_relative_eq!(j.d1(0), fd_t, max_relative = 1e-6);
    }
}
