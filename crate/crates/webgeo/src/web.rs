//! Veronese webs on a coordinate rectangle.
//!
//! A planar Veronese web is a one-parameter family of foliations whose
//! defining one-forms depend linearly on a projective parameter `(s:t)`. In
//! the canonical coordinates used throughout, the family is generated by a
//! function `w(x, y)` with nowhere-vanishing partials: the leaf of parameter
//! `t` integrates the vector field `w_y d/dx - t w_x d/dy`, so the foliation
//! at `t = 0` is `ker dy`, at `t = infinity` it is `ker dx`, and the middle
//! foliation `ker dw` sits at the configurable parameter `t2` (default 1).
//!
//! A web can be backed by a potential `w`, by a coframe pair `(w_x, w_y)`
//! given up to a common scale (an exact potential is unnecessary, only the
//! ratio enters every formula), or — after a Moebius reparametrization — by a
//! general pair of generating one-forms.

use crate::error::{Error, Result};
use crate::expr::build;
use crate::field::{Rect, ScalarField};
use crate::integrate::{integrate, StepControl};
use crate::jet::Jet;

/// A point of the real projective line as a normalized pair `(s : t)`.
///
/// Normalization: `max(|s|, |t|) = 1` and the first non-zero coordinate is
/// positive, so each projective point has exactly one representative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjParam {
    s: f64,
    t: f64,
}

impl ProjParam {
    pub fn new(s: f64, t: f64) -> Result<ProjParam> {
        if (s == 0.0 && t == 0.0) || !s.is_finite() || !t.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "projective parameter ({s}:{t}) is degenerate"
            )));
        }
        let m = s.abs().max(t.abs());
        let mut s = s / m;
        let mut t = t / m;
        let first = if s != 0.0 { s } else { t };
        if first < 0.0 {
            s = -s;
            t = -t;
        }
        // collapse -0.0 so representatives compare bitwise
        if s == 0.0 {
            s = 0.0;
        }
        if t == 0.0 {
            t = 0.0;
        }
        Ok(ProjParam { s, t })
    }

    /// The affine point `(1 : t)`.
    pub fn affine(t: f64) -> ProjParam {
        ProjParam::new(1.0, t).expect("finite affine parameter")
    }

    /// The point at infinity `(0 : 1)`.
    pub fn infinity() -> ProjParam {
        ProjParam { s: 0.0, t: 1.0 }
    }

    pub fn is_infinity(&self) -> bool {
        self.s == 0.0
    }

    /// `t/s` when `s != 0`, `None` at infinity.
    pub fn affine_value(&self) -> Option<f64> {
        if self.s == 0.0 {
            None
        } else {
            Some(self.t / self.s)
        }
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn approx_eq(&self, other: &ProjParam, tol: f64) -> bool {
        (self.s - other.s).abs() <= tol && (self.t - other.t).abs() <= tol
    }
}

/// A field of directions: point to non-zero 2-vector, defined up to scale.
pub struct DirectionField {
    eval: Box<dyn Fn(f64, f64) -> Result<[f64; 2]> + Send + Sync>,
}

impl DirectionField {
    pub fn new(eval: impl Fn(f64, f64) -> Result<[f64; 2]> + Send + Sync + 'static) -> Self {
        DirectionField {
            eval: Box::new(eval),
        }
    }

    pub fn at(&self, x: f64, y: f64) -> Result<[f64; 2]> {
        let v = (self.eval)(x, y)?;
        let norm = v[0].hypot(v[1]);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Singular {
                what: "direction field vanishes".into(),
                x,
                y,
            });
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Backing {
    /// A potential `w`; the coframe pair is `(w_x, w_y)`.
    Potential(ScalarField),
    /// The pair `(w_x, w_y)` directly, up to a common non-vanishing scale.
    Pair { wx: ScalarField, wy: ScalarField },
    /// Moebius reparametrization of a canonical web: the foliation at `m(t)`
    /// is the base web's at `t`, realized by pulling the projective parameter
    /// back through the map (the family stays linear in `(s:t)`).
    Moebius {
        base: Box<WebSpec>,
        m: crate::duality::MoebiusMap,
    },
}

/// Jets of the coframe pair `(u, v) = (w_x, w_y)` at a point.
#[derive(Debug, Clone, Copy)]
pub struct PairJets {
    pub u: Jet,
    pub v: Jet,
}

/// A Veronese web on a rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct WebSpec {
    domain: Rect,
    t2: ProjParam,
    backing: Backing,
    /// Sign of w_y/w_x, constant across the domain by transversality.
    ratio_sign: f64,
}

/// Grid resolution for the transversality check.
pub const DEFAULT_TRANSVERSALITY_GRID: usize = 64;

/// Extends the 3-web `{ker dx, ker dw, ker dy}` to the unique Veronese web
/// placing the middle foliation at parameter `t2`.
pub fn from_3web(w: ScalarField, t2: ProjParam) -> Result<WebSpec> {
    from_3web_with_grid(w, t2, DEFAULT_TRANSVERSALITY_GRID)
}

pub fn from_3web_with_grid(w: ScalarField, t2: ProjParam, grid: usize) -> Result<WebSpec> {
    WebSpec::build(w.domain(), t2, Backing::Potential(w), grid)
}

impl WebSpec {
    /// A web from the coframe pair `(w_x, w_y)`, given up to a common scale.
    pub fn from_pair(wx: ScalarField, wy: ScalarField, t2: ProjParam) -> Result<WebSpec> {
        if wx.domain() != wy.domain() {
            return Err(Error::InvalidParameter(
                "coframe pair components must share a domain".into(),
            ));
        }
        WebSpec::build(
            wx.domain(),
            t2,
            Backing::Pair { wx, wy },
            DEFAULT_TRANSVERSALITY_GRID,
        )
    }

    /// Web whose foliation at `m(t)` is this web's at `t`. Nested maps
    /// compose instead of stacking.
    pub(crate) fn reparametrized(&self, m: &crate::duality::MoebiusMap) -> Result<WebSpec> {
        let t2 = m.apply(self.t2);
        let (base, total) = match &self.backing {
            Backing::Moebius { base, m: inner } => (base.clone(), m.compose(inner)),
            _ => (Box::new(self.clone()), *m),
        };
        WebSpec::build(
            self.domain,
            t2,
            Backing::Moebius { base, m: total },
            DEFAULT_TRANSVERSALITY_GRID,
        )
    }

    fn build(domain: Rect, t2: ProjParam, backing: Backing, grid: usize) -> Result<WebSpec> {
        let canonical = !matches!(backing, Backing::Moebius { .. });
        if canonical && t2.affine_value().is_none_or(|v| v == 0.0) {
            return Err(Error::InvalidParameter(
                "t2 must be affine and non-zero: the middle foliation cannot coincide \
                 with ker dy (t = 0) or ker dx (t = infinity)"
                    .into(),
            ));
        }
        let mut web = WebSpec {
            domain,
            t2,
            backing,
            ratio_sign: 1.0,
        };
        web.check_transversality(grid)?;
        if web.is_canonical() {
            let (cx, cy) = domain.center();
            let pj = web.pair_jets(cx, cy, 0)?;
            web.ratio_sign = (pj.v.value() / pj.u.value()).signum();
        }
        Ok(web)
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn t2(&self) -> ProjParam {
        self.t2
    }

    fn tau(&self) -> f64 {
        self.t2.affine_value().expect("validated at construction")
    }

    /// Sign of `w_y/w_x`, fixed once per web.
    pub fn ratio_sign(&self) -> f64 {
        self.ratio_sign
    }

    /// Whether the web is in canonical form (ker dy at 0, ker dx at infinity),
    /// i.e. backed by a potential or a coframe pair.
    pub fn is_canonical(&self) -> bool {
        !matches!(self.backing, Backing::Moebius { .. })
    }

    pub fn is_potential_backed(&self) -> bool {
        matches!(self.backing, Backing::Potential(_))
    }

    /// Potential jet at a point (potential-backed webs only).
    pub fn potential_jet(&self, x: f64, y: f64, order: usize) -> Result<Option<Jet>> {
        match &self.backing {
            Backing::Potential(w) => Ok(Some(w.jet(x, y, order)?)),
            _ => Ok(None),
        }
    }

    /// Jets of the coframe pair `(w_x, w_y)` with partials up to `order`.
    pub fn pair_jets(&self, x: f64, y: f64, order: usize) -> Result<PairJets> {
        match &self.backing {
            Backing::Potential(w) => {
                let jw = w.jet(x, y, order + 1)?;
                Ok(PairJets {
                    u: jw.deriv(0),
                    v: jw.deriv(1),
                })
            }
            Backing::Pair { wx, wy } => Ok(PairJets {
                u: wx.jet(x, y, order)?,
                v: wy.jet(x, y, order)?,
            }),
            Backing::Moebius { .. } => Err(Error::NonCanonicalWeb("pair_jets")),
        }
    }

    /// Values of the coframe pair (fast path used by integrators).
    pub fn pair_values(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        match &self.backing {
            Backing::Potential(w) => {
                let jw = w.jet(x, y, 1)?;
                Ok((jw.d1(0), jw.d1(1)))
            }
            Backing::Pair { wx, wy } => Ok((wx.value(x, y)?, wy.value(x, y)?)),
            Backing::Moebius { .. } => Err(Error::NonCanonicalWeb("pair_values")),
        }
    }

    /// Raw coframe components before projective normalization; linear in
    /// `(s, t)` by construction.
    pub fn coframe_raw(&self, s: f64, t: f64, x: f64, y: f64) -> Result<[f64; 2]> {
        match &self.backing {
            Backing::Moebius { base, m } => {
                // omega'_(s:t) = omega_(as - ct : -bs + dt) up to scale
                base.coframe_raw(m.a * s - m.c * t, -m.b * s + m.d * t, x, y)
            }
            _ => {
                let (u, v) = self.pair_values(x, y)?;
                // omega0 = w_y dy, omega1 = (w_x / tau) dx
                Ok([t * u / self.tau(), s * v])
            }
        }
    }

    /// Covector annihilating the leaf direction of the foliation at `t`.
    pub fn coframe(&self, t: ProjParam, x: f64, y: f64) -> Result<[f64; 2]> {
        let c = self.coframe_raw(t.s(), t.t(), x, y)?;
        let norm = c[0].hypot(c[1]);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Singular {
                what: "coframe vanishes".into(),
                x,
                y,
            });
        }
        Ok(c)
    }

    /// Tangent direction of the leaf of the foliation at `t` (up to scale).
    pub fn leaf_direction(&self, t: ProjParam, x: f64, y: f64) -> Result<[f64; 2]> {
        let c = self.coframe(t, x, y)?;
        Ok([c[1], -c[0]])
    }

    /// Direction field of the foliation at a fixed parameter.
    pub fn leaf_field(&self, t: ProjParam) -> DirectionField {
        let web = self.clone();
        DirectionField::new(move |x, y| web.leaf_direction(t, x, y))
    }

    /// Slope `dy/dx` of the leaf of affine parameter `t` at a point.
    pub fn leaf_slope(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        match &self.backing {
            Backing::Moebius { .. } => {
                let c = self.coframe_raw(1.0, t, x, y)?;
                if c[1] == 0.0 {
                    return Err(Error::Singular {
                        what: format!("leaf of t = {t} is vertical"),
                        x,
                        y,
                    });
                }
                Ok(-c[0] / c[1])
            }
            _ => {
                let (u, v) = self.pair_values(x, y)?;
                if v == 0.0 {
                    return Err(Error::Singular {
                        what: "w_y vanishes".into(),
                        x,
                        y,
                    });
                }
                Ok(-(t / self.tau()) * u / v)
            }
        }
    }

    /// Integrates the leaf of affine parameter `t` from `start` to
    /// `x_target`, returning the ordinate there.
    pub fn leaf_through(
        &self,
        t: f64,
        start: (f64, f64),
        x_target: f64,
        ctrl: &StepControl,
    ) -> Result<f64> {
        self.leaf_run(t, start, x_target, ctrl, &mut |_, _| {})
    }

    /// Like [`leaf_through`](Self::leaf_through) but records the accepted
    /// integration points.
    pub fn leaf_polyline(
        &self,
        t: f64,
        start: (f64, f64),
        x_target: f64,
        ctrl: &StepControl,
    ) -> Result<Vec<(f64, f64)>> {
        let mut pts = vec![start];
        let y = self.leaf_run(t, start, x_target, ctrl, &mut |x, y| pts.push((x, y)))?;
        let _ = y;
        Ok(pts)
    }

    fn leaf_run(
        &self,
        t: f64,
        start: (f64, f64),
        x_target: f64,
        ctrl: &StepControl,
        record: &mut dyn FnMut(f64, f64),
    ) -> Result<f64> {
        let (x0, y0) = start;
        if !self.domain.contains(x0, y0) {
            return Err(Error::OutOfDomain {
                x: x0,
                y: y0,
                x_min: self.domain.x_min,
                x_max: self.domain.x_max,
                y_min: self.domain.y_min,
                y_max: self.domain.y_max,
            });
        }
        let domain = self.domain;
        let mut rhs = |x: f64, y: &[f64; 1]| Ok([self.leaf_slope(t, x, y[0])?]);
        let mut on_accept = |x: f64, y: &[f64; 1]| {
            if !domain.contains_padded(x, y[0], 1e-12) {
                return Err(Error::LeafExitsDomain { t, x, y: y[0] });
            }
            record(x, y[0]);
            Ok(())
        };
        let yf = integrate(&mut rhs, x0, [y0], x_target, ctrl, &mut on_accept)?;
        Ok(yf[0])
    }

    fn check_transversality(&self, grid: usize) -> Result<()> {
        let n = grid.max(2);
        match &self.backing {
            Backing::Moebius { .. } => {
                // generator independence: det(omega'_(1:0), omega'_(0:1)) != 0
                let mut sign = 0.0;
                for (x, y) in self.domain.grid(n) {
                    let o0 = self.coframe_raw(1.0, 0.0, x, y)?;
                    let o1 = self.coframe_raw(0.0, 1.0, x, y)?;
                    let det = o0[0] * o1[1] - o0[1] * o1[0];
                    check_component("det(omega0, omega1)", det, &mut sign, x, y)?;
                }
                Ok(())
            }
            _ => {
                let mut sign_u = 0.0;
                let mut sign_v = 0.0;
                for (x, y) in self.domain.grid(n) {
                    let (u, v) = self.pair_values(x, y)?;
                    check_component("w_x", u, &mut sign_u, x, y)?;
                    check_component("w_y", v, &mut sign_v, x, y)?;
                }
                Ok(())
            }
        }
    }
}

fn check_component(which: &str, value: f64, sign: &mut f64, x: f64, y: f64) -> Result<()> {
    if value == 0.0 || !value.is_finite() {
        return Err(Error::Transversality {
            which: which.into(),
            how: "vanishes".into(),
            x,
            y,
        });
    }
    if *sign == 0.0 {
        *sign = value.signum();
    } else if value.signum() != *sign {
        return Err(Error::Transversality {
            which: which.into(),
            how: "changes sign".into(),
            x,
            y,
        });
    }
    Ok(())
}

// ---- builtin webs ----------------------------------------------------------

/// The flat web `w = x + y`: straight-line leaves, flat connection.
pub fn flat_web(domain: Rect) -> WebSpec {
    let w = ScalarField::parse("x+y", domain).expect("static expression");
    from_3web(w, ProjParam::affine(1.0)).expect("flat web is transversal")
}

/// The bilinear web `w = x + y + x*y` (valid where `1+x` and `1+y` stay
/// positive).
pub fn bilinear_web(domain: Rect) -> Result<WebSpec> {
    let w = ScalarField::parse("x + y + x*y", domain)?;
    from_3web(w, ProjParam::affine(1.0))
}

/// Coframe pair `(1, e^{C x y})`, the web of constant curvature `rho = C`.
/// Lives in the `web` module so `connection::constant_curvature_web` can wrap
/// it; no potential is stored, only the pair.
pub fn constant_curvature_pair(c: f64, domain: Rect) -> WebSpec {
    let one = ScalarField::new(
        crate::expr::Expression::from_parts(vec!["x".into(), "y".into()], build::lit(1.0)),
        domain,
    )
    .expect("two variables");
    let e = crate::expr::Expression::from_parts(
        vec!["x".into(), "y".into()],
        build::exp(build::scale(c, build::mul(build::var(0), build::var(1)))),
    );
    let wy = ScalarField::new(e, domain).expect("two variables");
    WebSpec::from_pair(one, wy, ProjParam::affine(1.0)).expect("exponential pair is transversal")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
        a[0] * b[1] - a[1] * b[0]
    }

    #[test]
    fn proj_param_normalization() {
        let p = ProjParam::new(2.0, -4.0).unwrap();
        assert_eq!((p.s(), p.t()), (0.5, -1.0));
        let q = ProjParam::new(-2.0, 4.0).unwrap();
        assert_eq!(p, q);
        let inf = ProjParam::new(0.0, -3.0).unwrap();
        assert!(inf.is_infinity());
        assert_eq!(inf.t(), 1.0);
        assert_eq!(inf.affine_value(), None);
        assert_eq!(ProjParam::affine(0.25).affine_value(), Some(0.25));
        assert!(ProjParam::new(0.0, 0.0).is_err());
    }

    #[test]
    fn flat_web_coframe() {
        let web = flat_web(Rect::unit());
        let c = web.coframe(ProjParam::affine(1.0), 0.3, 0.6).unwrap();
        // proportional to (1, 1)
        assert_relative_eq!(c[0], c[1], max_relative = 1e-14);
        let c_inf = web.coframe(ProjParam::infinity(), 0.3, 0.6).unwrap();
        assert_eq!(c_inf[1], 0.0);
        assert!(c_inf[0] != 0.0);
    }

    #[test]
    fn bilinear_coframe_oracle() {
        // at (0,0): w_x = 1, w_y = 1; coframe at affine t = 2 is (2 w_x, w_y)
        let web = bilinear_web(Rect::unit()).unwrap();
        let c = web.coframe(ProjParam::affine(2.0), 0.0, 0.0).unwrap();
        assert_relative_eq!(c[0] / c[1], 2.0, max_relative = 1e-14);
    }

    #[test]
    fn leaf_directions_match_convention() {
        let web = bilinear_web(Rect::unit()).unwrap();
        // t = 1 at (0,0): (w_y, -w_x) = (1, -1)
        let d = web
            .leaf_direction(ProjParam::affine(1.0), 0.0, 0.0)
            .unwrap();
        assert_relative_eq!(d[0] / -d[1], 1.0, max_relative = 1e-14);
        // t = 0: direction proportional to (1, 0)
        let d0 = web
            .leaf_direction(ProjParam::affine(0.0), 0.4, 0.2)
            .unwrap();
        assert_eq!(d0[1], 0.0);
        assert!(d0[0] != 0.0);
        // t = infinity: proportional to (0, 1)
        let di = web.leaf_direction(ProjParam::infinity(), 0.4, 0.2).unwrap();
        assert_eq!(di[0], 0.0);
    }

    #[test]
    fn transversality_violation_names_the_point() {
        let w = ScalarField::parse("x*y", Rect::new(0.1, 1.0, -1.0, 1.0).unwrap()).unwrap();
        match from_3web(w, ProjParam::affine(1.0)) {
            Err(Error::Transversality { which, x, y, .. }) => {
                // w_x = y vanishes (or flips sign) somewhere on the grid
                assert_eq!(which, "w_x");
                assert!(x.is_finite() && y.is_finite());
            }
            other => panic!("expected transversality error, got {other:?}"),
        }
    }

    #[test]
    fn t2_must_be_affine_nonzero() {
        let w = ScalarField::parse("x+y", Rect::unit()).unwrap();
        assert!(from_3web(w.clone(), ProjParam::infinity()).is_err());
        assert!(from_3web(w, ProjParam::affine(0.0)).is_err());
    }

    #[test]
    fn annihilation_and_three_point_recovery() {
        let web = bilinear_web(Rect::unit()).unwrap();
        for &t in &[-2.0, -0.5, 0.0, 0.7, 3.0] {
            let p = ProjParam::affine(t);
            for &(x, y) in &[(0.1, 0.9), (0.5, 0.5), (0.8, 0.2)] {
                let c = web.coframe(p, x, y).unwrap();
                let d = web.leaf_direction(p, x, y).unwrap();
                let dot = c[0] * d[0] + c[1] * d[1];
                assert!(dot.abs() < 1e-13 * c[0].hypot(c[1]) * d[0].hypot(d[1]));
            }
        }
        // middle foliation at t2 = 1 is ker dw: tangent (w_y, -w_x)
        let (x, y) = (0.25, 0.75);
        let d = web.leaf_direction(ProjParam::affine(1.0), x, y).unwrap();
        let (u, v) = web.pair_values(x, y).unwrap();
        assert!(cross(d, [v, -u]).abs() < 1e-13);
    }

    #[test]
    fn nondefault_t2_places_middle_foliation() {
        let w = ScalarField::parse("x + y + x*y", Rect::unit()).unwrap();
        let web = from_3web(w, ProjParam::affine(2.5)).unwrap();
        let (x, y) = (0.3, 0.4);
        let d = web.leaf_direction(ProjParam::affine(2.5), x, y).unwrap();
        let (u, v) = web.pair_values(x, y).unwrap();
        assert!(cross(d, [v, -u]).abs() < 1e-13);
        // and t = 0 / infinity stay put
        let d0 = web.leaf_direction(ProjParam::affine(0.0), x, y).unwrap();
        assert_eq!(d0[1], 0.0);
        let di = web.leaf_direction(ProjParam::infinity(), x, y).unwrap();
        assert_eq!(di[0], 0.0);
    }

    #[test]
    fn flat_leaf_is_exact() {
        let web = flat_web(Rect::new(-1.0, 2.0, -2.0, 2.0).unwrap());
        let ctrl = StepControl::default();
        let y = web.leaf_through(1.0, (0.0, 0.5), 1.0, &ctrl).unwrap();
        assert!((y - (-0.5)).abs() < 1e-13);
        let y = web.leaf_through(2.0, (0.0, 0.0), 0.25, &ctrl).unwrap();
        assert!((y - (-0.5)).abs() < 1e-13);
        // zero-length integration
        let web_cc = constant_curvature_pair(1.0, Rect::new(0.0, 1.5, 0.0, 1.5).unwrap());
        let y = web_cc.leaf_through(1.0, (1.0, 1.0), 1.0, &ctrl).unwrap();
        assert_eq!(y, 1.0);
    }

    #[test]
    fn bilinear_leaf_matches_closed_form() {
        // y' = -t (1+y)/(1+x): (1+y) = (1+y0) ((1+x)/(1+x0))^{-t}
        let web = bilinear_web(Rect::unit()).unwrap();
        let ctrl = StepControl::default();
        let (x0, y0, t) = (0.1_f64, 0.9_f64, 0.8_f64);
        let x1 = 0.9_f64;
        let y1 = web.leaf_through(t, (x0, y0), x1, &ctrl).unwrap();
        let exact = (1.0 + y0) * ((1.0 + x1) / (1.0 + x0)).powf(-t) - 1.0;
        assert_relative_eq!(y1, exact, max_relative = 1e-10);
    }

    #[test]
    fn leaf_exits_domain_is_an_error() {
        let web = flat_web(Rect::unit());
        match web.leaf_through(3.0, (0.0, 0.5), 1.0, &StepControl::default()) {
            Err(Error::LeafExitsDomain { .. }) => {}
            other => panic!("expected leaf exit, got {other:?}"),
        }
    }

    #[test]
    fn leaf_tolerance_responsiveness() {
        // halving the tolerance reduces the defect against the bilinear
        // closed form at least proportionally (with a floor for rounding)
        let web = bilinear_web(Rect::unit()).unwrap();
        let (x0, y0, t, x1) = (0.05_f64, 0.9_f64, 0.8_f64, 0.95_f64);
        let exact = (1.0 + y0) * ((1.0 + x1) / (1.0 + x0)).powf(-t) - 1.0;
        let defect = |rel: f64| {
            let ctrl = StepControl {
                rel_tol: rel,
                abs_tol: rel * 1e-2,
                ..StepControl::default()
            };
            (web.leaf_through(t, (x0, y0), x1, &ctrl).unwrap() - exact).abs()
        };
        let mut prev = defect(1e-5);
        for rel in [5e-6, 2.5e-6, 1.25e-6] {
            let d = defect(rel);
            assert!(
                d <= 0.75 * prev || d < 1e-13,
                "defect did not shrink: {prev} -> {d} at rel={rel}"
            );
            prev = d;
        }
    }

    #[test]
    fn negative_ratio_web_is_valid() {
        let w = ScalarField::parse("x - y", Rect::unit()).unwrap();
        let web = from_3web(w, ProjParam::affine(1.0)).unwrap();
        assert_eq!(web.ratio_sign(), -1.0);
        let y = web
            .leaf_through(1.0, (0.0, 0.2), 0.5, &StepControl::default())
            .unwrap();
        // slope = -t w_x / w_y = -1 * 1 / (-1) = 1
        assert_relative_eq!(y, 0.7, max_relative = 1e-12);
    }
}
