//! The projective structure of a web as a second-order ODE, geodesic
//! integration, and the rectification that turns the equation into the total
//! derivative of a first-order ODE.
//!
//! For a canonical web the geodesic equation in graph form is
//!
//! ```text
//! y'' = G^x_xx y' - G^y_yy (y')^2
//! ```
//!
//! quadratic in `y'`, so the projective condition `d^4 Phi / dp^4 = 0` holds
//! by degree. The rectifying map `phi` integrates `d phi / dy = w_y/w_x`
//! along vertical segments; in coordinates `(x, phi(x, y))` the equation
//! becomes `y'' = d/dx [g] + d/dy [g] y'` for `g(x~, y~) = phi_x(x~,
//! phi^{-1}(x~, y~))`.

use crate::error::{Error, Result};
use crate::integrate::{integrate, StepControl};
use crate::jet::{Jet, JetSpace};
use crate::web::WebSpec;
use crate::Expression;

/// A second-order ODE `y'' = Phi(x, y, y')`, either generated by a web or
/// given by an expression in `(x, y, p)`.
#[derive(Debug, Clone)]
pub enum SecondOrderODE {
    WebGeodesic(WebSpec),
    Expr {
        expr: Expression,
        domain: crate::field::Rect,
    },
}

impl SecondOrderODE {
    pub fn from_expr(expr: Expression, domain: crate::field::Rect) -> Result<SecondOrderODE> {
        if expr.vars().len() != 3 {
            return Err(Error::InvalidParameter(
                "Phi must be an expression in (x, y, p)".into(),
            ));
        }
        Ok(SecondOrderODE::Expr { expr, domain })
    }

    pub fn domain(&self) -> crate::field::Rect {
        match self {
            SecondOrderODE::WebGeodesic(web) => web.domain(),
            SecondOrderODE::Expr { domain, .. } => *domain,
        }
    }

    /// Right-hand side value.
    pub fn phi(&self, x: f64, y: f64, p: f64) -> Result<f64> {
        match self {
            SecondOrderODE::WebGeodesic(web) => {
                let (a, b) = web_gamma_values(web, x, y)?;
                Ok(a * p - b * p * p)
            }
            SecondOrderODE::Expr { expr, .. } => expr.eval_value(&[x, y, p]),
        }
    }

    /// `[Phi, dPhi/dp, ..., d4Phi/dp4]` at a point (exact path: structural for
    /// web-generated right-hand sides, univariate order-4 jets otherwise).
    pub fn phi_p_jet4(&self, x: f64, y: f64, p: f64) -> Result<[f64; 5]> {
        match self {
            SecondOrderODE::WebGeodesic(web) => {
                let (a, b) = web_gamma_values(web, x, y)?;
                Ok([a * p - b * p * p, a - 2.0 * b * p, -2.0 * b, 0.0, 0.0])
            }
            SecondOrderODE::Expr { expr, .. } => {
                let space = JetSpace::get(1, 4);
                let j = expr.eval_jet(
                    space,
                    &[
                        Jet::constant(space, x),
                        Jet::constant(space, y),
                        Jet::variable(space, 0, p),
                    ],
                )?;
                Ok([
                    j.value(),
                    j.partial([1, 0, 0]),
                    j.partial([2, 0, 0]),
                    j.partial([3, 0, 0]),
                    j.partial([4, 0, 0]),
                ])
            }
        }
    }
}

fn web_gamma_values(web: &WebSpec, x: f64, y: f64) -> Result<(f64, f64)> {
    let pj = web.pair_jets(x, y, 1)?;
    let (u, v) = (pj.u, pj.v);
    let (u0, v0) = (u.value(), v.value());
    if u0 == 0.0 || v0 == 0.0 {
        return Err(Error::Singular {
            what: "coframe component vanishes".into(),
            x,
            y,
        });
    }
    let a = u.d1(0) / u0 - v.d1(0) / v0; // G^x_xx
    let b = v.d1(1) / v0 - u.d1(1) / u0; // G^y_yy
    Ok((a, b))
}

/// The geodesic equation of a canonical web.
pub fn geodesic_ode(web: &WebSpec) -> Result<SecondOrderODE> {
    if !web.is_canonical() {
        return Err(Error::NonCanonicalWeb("geodesic_ode"));
    }
    Ok(SecondOrderODE::WebGeodesic(web.clone()))
}

/// Report of the projective condition `d^4 Phi / dp^4 = 0`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CondReport {
    /// Maximum of |d4Phi/dp4| over the samples, exact (jet) path.
    pub max_exact: f64,
    /// Maximum over the 4th-order central-difference path.
    pub max_fd: f64,
    pub pass: bool,
}

pub const PROJECTIVE_CONDITION_TOL: f64 = 1e-10;

/// Evaluates the projective condition on samples, through both the exact jet
/// path and an independent 4th central difference in `p`.
pub fn check_projective_condition(
    ode: &SecondOrderODE,
    samples: &[(f64, f64, f64)],
) -> Result<CondReport> {
    let mut max_exact = 0.0f64;
    let mut max_fd = 0.0f64;
    for &(x, y, p) in samples {
        let jet = ode.phi_p_jet4(x, y, p)?;
        max_exact = max_exact.max(jet[4].abs());
        let h = 0.25 * p.abs().max(1.0);
        let f = |pp: f64| ode.phi(x, y, pp);
        let d4 = (f(p + 2.0 * h)? - 4.0 * f(p + h)? + 6.0 * f(p)? - 4.0 * f(p - h)?
            + f(p - 2.0 * h)?)
            / h.powi(4);
        max_fd = max_fd.max(d4.abs());
    }
    let pass =
        max_exact < PROJECTIVE_CONDITION_TOL && max_fd < 1e-12_f64.max(PROJECTIVE_CONDITION_TOL);
    Ok(CondReport {
        max_exact,
        max_fd,
        pass,
    })
}

/// An integrated geodesic: samples of `(x, y, y')`.
#[derive(Debug, Clone)]
pub struct GeodesicCurve {
    pub points: Vec<(f64, f64, f64)>,
}

impl GeodesicCurve {
    pub fn end(&self) -> (f64, f64, f64) {
        *self.points.last().expect("non-empty curve")
    }
}

/// Integrates `y'' = Phi(x, y, y')` from `(x0, y0)` with slope `p0`.
pub fn integrate_geodesic(
    ode: &SecondOrderODE,
    x0: f64,
    y0: f64,
    p0: f64,
    x_end: f64,
    ctrl: &StepControl,
) -> Result<GeodesicCurve> {
    let domain = ode.domain();
    if !domain.contains(x0, y0) {
        return Err(Error::OutOfDomain {
            x: x0,
            y: y0,
            x_min: domain.x_min,
            x_max: domain.x_max,
            y_min: domain.y_min,
            y_max: domain.y_max,
        });
    }
    let mut pts = vec![(x0, y0, p0)];
    let mut rhs = |x: f64, s: &[f64; 2]| Ok([s[1], ode.phi(x, s[0], s[1])?]);
    let mut on_accept = |x: f64, s: &[f64; 2]| {
        if !domain.contains_padded(x, s[0], 1e-12) {
            return Err(Error::GeodesicExitsDomain { x, y: s[0] });
        }
        pts.push((x, s[0], s[1]));
        Ok(())
    };
    integrate(&mut rhs, x0, [y0, p0], x_end, ctrl, &mut on_accept)?;
    Ok(GeodesicCurve { points: pts })
}

/// Integrates a geodesic and reports `(y, p)` at the given checkpoints
/// (restarting at each checkpoint so the values are exact samples).
pub fn geodesic_at(
    ode: &SecondOrderODE,
    x0: f64,
    y0: f64,
    p0: f64,
    checkpoints: &[f64],
    ctrl: &StepControl,
) -> Result<Vec<(f64, f64, f64)>> {
    let domain = ode.domain();
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut x = x0;
    let mut state = [y0, p0];
    for &cx in checkpoints {
        let mut rhs = |xx: f64, s: &[f64; 2]| Ok([s[1], ode.phi(xx, s[0], s[1])?]);
        let mut guard = |xx: f64, s: &[f64; 2]| {
            if !domain.contains_padded(xx, s[0], 1e-12) {
                return Err(Error::GeodesicExitsDomain { x: xx, y: s[0] });
            }
            Ok(())
        };
        state = integrate(&mut rhs, x, state, cx, ctrl, &mut guard)?;
        x = cx;
        out.push((cx, state[0], state[1]));
    }
    Ok(out)
}

// ---- rectification ----------------------------------------------------------

/// Value of the rectifying map and its x-derivatives at a point:
/// `phi = y0 + int_{y0}^{y} r(x, s) ds` with `r = w_y/w_x`.
#[derive(Debug, Clone, Copy)]
pub struct PhiJet {
    pub phi: f64,
    pub phi_x: f64,
    pub phi_xx: f64,
}

/// The rectifying point transformation `(x, y) -> (x, phi(x, y))` of a
/// canonical web, with its monotone inverse in the second slot.
#[derive(Debug, Clone)]
pub struct RectifyingMap {
    web: WebSpec,
    /// Anchor ordinate: `phi(x, y0) = y0`.
    pub y0: f64,
    ctrl: StepControl,
}

impl RectifyingMap {
    pub fn new(web: &WebSpec) -> Result<RectifyingMap> {
        if !web.is_canonical() {
            return Err(Error::NonCanonicalWeb("rectifying_phi"));
        }
        let y0 = 0.5 * (web.domain().y_min + web.domain().y_max);
        Ok(RectifyingMap {
            web: web.clone(),
            y0,
            ctrl: StepControl::with_tol(1e-12, 1e-14),
        })
    }

    /// The ratio jet `r = w_y/w_x` of order 2 at `(x, s)`.
    fn ratio_jet(&self, x: f64, s: f64) -> Result<Jet> {
        let pj = self.web.pair_jets(x, s, 2)?;
        pj.v.div(&pj.u)
    }

    /// `phi` and its x-derivatives by quadrature of the ratio jet.
    pub fn phi_jet(&self, x: f64, y: f64) -> Result<PhiJet> {
        let mut rhs = |s: f64, _state: &[f64; 3]| {
            let r = self.ratio_jet(x, s)?;
            Ok([r.value(), r.d1(0), r.d2(0, 0)])
        };
        let out = integrate(
            &mut rhs,
            self.y0,
            [self.y0, 0.0, 0.0],
            y,
            &self.ctrl,
            &mut |_, _| Ok(()),
        )?;
        Ok(PhiJet {
            phi: out[0],
            phi_x: out[1],
            phi_xx: out[2],
        })
    }

    pub fn phi(&self, x: f64, y: f64) -> Result<f64> {
        Ok(self.phi_jet(x, y)?.phi)
    }

    /// Pointwise partials that need no quadrature: `phi_y = r`,
    /// `phi_xy = r_x`, `phi_yy = r_y`.
    pub fn phi_y_jet(&self, x: f64, y: f64) -> Result<(f64, f64, f64)> {
        let r = self.ratio_jet(x, y)?;
        Ok((r.value(), r.d1(0), r.d1(1)))
    }

    /// Inverts `phi(x, .) = y_tilde` on the domain's y-range.
    pub fn invert(&self, x: f64, y_tilde: f64) -> Result<f64> {
        let d = self.web.domain();
        let mut f = |y: f64| self.phi(x, y);
        crate::solve::monotone_solve(&mut f, d.y_min, d.y_max, y_tilde, 1e-12)
    }
}

/// Rectifying map value at a point: `phi` and `phi_x` via jets of the
/// quadrature.
pub fn rectifying_phi(web: &WebSpec, x: f64, y: f64) -> Result<PhiJet> {
    RectifyingMap::new(web)?.phi_jet(x, y)
}

/// The first-order ODE `y~' = g(x~, y~)` whose total derivative is the
/// rectified geodesic equation.
pub struct FirstOrderODE {
    pub map: RectifyingMap,
}

impl FirstOrderODE {
    /// `g(x~, y~) = phi_x(x~, phi^{-1}(x~, y~))`.
    pub fn g(&self, x_tilde: f64, y_tilde: f64) -> Result<f64> {
        let y = self.map.invert(x_tilde, y_tilde)?;
        Ok(self.map.phi_jet(x_tilde, y)?.phi_x)
    }
}

/// Builds the first-order form of the web's geodesic equation.
pub fn derivative_form(web: &WebSpec) -> Result<FirstOrderODE> {
    Ok(FirstOrderODE {
        map: RectifyingMap::new(web)?,
    })
}
