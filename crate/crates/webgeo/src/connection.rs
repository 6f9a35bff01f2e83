//! The connection associated to a Veronese web, its curvature and Ricci
//! tensor, parallel transport, and the inverse construction that recovers a
//! web from any torsion-free connection with skew-symmetric Ricci tensor.
//!
//! For a web generated by `w`, the only non-zero Christoffel symbols are
//!
//! ```text
//! G^x_xx = (w_y w_xx - w_x w_xy)/(w_x w_y) = -d/dx ln|w_y/w_x|
//! G^y_yy = (w_x w_yy - w_y w_xy)/(w_x w_y) =  d/dy ln|w_y/w_x|
//! ```
//!
//! so everything is driven by the ratio `r = w_y/w_x`, which is invariant
//! under a common rescaling of the coframe pair. The curvature operator is
//! scalar, `R(dx, dy)V = rho V` with `rho = (ln r)_xy`, and the Ricci tensor
//! is `[[0, rho], [-rho, 0]]`.

#![allow(clippy::needless_range_loop)] // tensor index loops mirror the formulas
#![allow(clippy::type_complexity)]

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{Rect, ScalarField};
use crate::integrate::{integrate, StepControl};
use crate::jet::Jet;
use crate::web::{ProjParam, WebSpec};

/// Which of the two non-trivial web Christoffel symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WebGammaKind {
    Xxx,
    Yyy,
}

/// One Christoffel coefficient field.
#[derive(Clone)]
pub enum Coeff {
    Zero,
    /// Expression-backed; exact first partials via jets.
    Expr(ScalarField),
    /// Derived from a web's coframe pair; exact first partials via jets.
    Web(WebSpec, WebGammaKind),
    /// Opaque value function; first partials by central differences.
    Fn(Arc<dyn Fn(f64, f64) -> Result<f64> + Send + Sync>),
    /// Base plus an expression-backed perturbation (fault injection).
    Perturbed(Box<Coeff>, ScalarField),
}

impl std::fmt::Debug for Coeff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Coeff::Zero => write!(f, "Zero"),
            Coeff::Expr(s) => write!(f, "Expr({})", s.expr()),
            Coeff::Web(_, k) => write!(f, "Web({k:?})"),
            Coeff::Fn(_) => write!(f, "Fn(..)"),
            Coeff::Perturbed(base, d) => write!(f, "Perturbed({base:?} + {})", d.expr()),
        }
    }
}

impl Coeff {
    fn web_gamma_jet(
        web: &WebSpec,
        kind: WebGammaKind,
        x: f64,
        y: f64,
        order: usize,
    ) -> Result<Jet> {
        let pj = web.pair_jets(x, y, order + 1)?;
        let (u, v) = (pj.u, pj.v);
        let ut = u.truncated(order);
        let vt = v.truncated(order);
        match kind {
            // u_x/u - v_x/v
            WebGammaKind::Xxx => Ok(u.deriv(0).div(&ut)?.sub(&v.deriv(0).div(&vt)?)),
            // v_y/v - u_y/u
            WebGammaKind::Yyy => Ok(v.deriv(1).div(&vt)?.sub(&u.deriv(1).div(&ut)?)),
        }
    }

    pub fn value(&self, x: f64, y: f64) -> Result<f64> {
        match self {
            Coeff::Zero => Ok(0.0),
            Coeff::Expr(field) => field.value(x, y),
            Coeff::Web(web, kind) => Ok(Self::web_gamma_jet(web, *kind, x, y, 0)?.value()),
            Coeff::Fn(f) => f(x, y),
            Coeff::Perturbed(base, d) => Ok(base.value(x, y)? + d.value(x, y)?),
        }
    }

    /// Value and gradient; `fd_step` is used only for opaque `Fn` fields.
    pub fn value_grad(&self, x: f64, y: f64, fd_step: f64) -> Result<(f64, [f64; 2])> {
        match self {
            Coeff::Zero => Ok((0.0, [0.0, 0.0])),
            Coeff::Expr(field) => {
                let j = field.jet(x, y, 1)?;
                Ok((j.value(), [j.d1(0), j.d1(1)]))
            }
            Coeff::Web(web, kind) => {
                let j = Self::web_gamma_jet(web, *kind, x, y, 1)?;
                Ok((j.value(), [j.d1(0), j.d1(1)]))
            }
            Coeff::Fn(f) => {
                let h = fd_step;
                let v = f(x, y)?;
                let gx = (f(x + h, y)? - f(x - h, y)?) / (2.0 * h);
                let gy = (f(x, y + h)? - f(x, y - h)?) / (2.0 * h);
                Ok((v, [gx, gy]))
            }
            Coeff::Perturbed(base, d) => {
                let (v0, g0) = base.value_grad(x, y, fd_step)?;
                let j = d.jet(x, y, 1)?;
                Ok((v0 + j.value(), [g0[0] + j.d1(0), g0[1] + j.d1(1)]))
            }
        }
    }
}

/// Christoffel symbols and their first partials at a point.
/// Index convention: `value[i][j + k]` is `G^i_{jk}` with `x = 0`, `y = 1`
/// (the symmetric pair `(j, k)` collapses to `j + k` in `{0, 1, 2}`).
#[derive(Debug, Clone, Copy)]
pub struct ChristoffelJets {
    pub value: [[f64; 3]; 2],
    pub grad: [[[f64; 2]; 3]; 2],
}

/// A torsion-free connection on a rectangle: six coefficient fields
/// `G^i_{jk} = G^i_{kj}`; the symmetry is structural.
#[derive(Debug, Clone)]
pub struct Connection2 {
    domain: Rect,
    coeffs: [[Coeff; 3]; 2],
}

impl Connection2 {
    pub fn zero(domain: Rect) -> Connection2 {
        Connection2 {
            domain,
            coeffs: std::array::from_fn(|_| std::array::from_fn(|_| Coeff::Zero)),
        }
    }

    pub fn from_coeffs(domain: Rect, coeffs: [[Coeff; 3]; 2]) -> Connection2 {
        Connection2 { domain, coeffs }
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    /// Replaces `G^i_{jk}` (and the symmetric slot) with `coeff`.
    pub fn set(&mut self, i: usize, j: usize, k: usize, coeff: Coeff) {
        self.coeffs[i][j + k] = coeff;
    }

    pub fn coeff(&self, i: usize, j: usize, k: usize) -> &Coeff {
        &self.coeffs[i][j + k]
    }

    /// Adds `delta` to `G^x_xx`; used for fault injection in verification.
    pub fn perturb_gamma_xxx(mut self, delta: ScalarField) -> Connection2 {
        let base = std::mem::replace(&mut self.coeffs[0][0], Coeff::Zero);
        self.coeffs[0][0] = Coeff::Perturbed(Box::new(base), delta);
        self
    }

    pub fn christoffels(&self, x: f64, y: f64) -> Result<[[f64; 3]; 2]> {
        let mut v = [[0.0; 3]; 2];
        for i in 0..2 {
            for s in 0..3 {
                v[i][s] = self.coeffs[i][s].value(x, y)?;
            }
        }
        Ok(v)
    }

    pub fn christoffels_grad(&self, x: f64, y: f64, fd_step: f64) -> Result<ChristoffelJets> {
        let mut value = [[0.0; 3]; 2];
        let mut grad = [[[0.0; 2]; 3]; 2];
        for i in 0..2 {
            for s in 0..3 {
                let (v, g) = self.coeffs[i][s].value_grad(x, y, fd_step)?;
                value[i][s] = v;
                grad[i][s] = g;
            }
        }
        Ok(ChristoffelJets { value, grad })
    }
}

/// The connection associated to a canonical web.
pub fn web_connection(web: &WebSpec) -> Result<Connection2> {
    if !web.is_canonical() {
        return Err(Error::NonCanonicalWeb("web_connection"));
    }
    let mut conn = Connection2::zero(web.domain());
    conn.set(0, 0, 0, Coeff::Web(web.clone(), WebGammaKind::Xxx));
    conn.set(1, 1, 1, Coeff::Web(web.clone(), WebGammaKind::Yyy));
    Ok(conn)
}

/// The web with constant curvature `rho = C`, realized by the coframe pair
/// `(1, e^{Cxy})`; an exact potential is unnecessary.
pub fn constant_curvature_web(c: f64, domain: Rect) -> WebSpec {
    crate::web::constant_curvature_pair(c, domain)
}

/// Both evaluation routes for the scalar curvature at a point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RhoValue {
    /// Term-by-term rational formula.
    pub direct: f64,
    /// Compact form `(ln |w_y/w_x|)_xy`.
    pub compact: f64,
}

impl RhoValue {
    pub fn value(&self) -> f64 {
        self.compact
    }

    pub fn disagreement(&self) -> f64 {
        (self.direct - self.compact).abs() / self.direct.abs().max(self.compact.abs()).max(1.0)
    }
}

pub const RHO_AGREEMENT_TOL: f64 = 1e-9;

/// Scalar curvature through two independent routes; errors if they disagree
/// beyond `RHO_AGREEMENT_TOL` (that would be an implementation bug, not data).
pub fn curvature_rho(web: &WebSpec, point: (f64, f64)) -> Result<RhoValue> {
    let (x, y) = point;
    let direct = if let Some(jw) = web.potential_jet(x, y, 3)? {
        // literal formula on the potential jet; w_xy is the symmetric mixed
        // partial of w itself
        let wx = jw.d1(0);
        let wy = jw.d1(1);
        let wxx = jw.d2(0, 0);
        let wxy = jw.d2(0, 1);
        let wyy = jw.d2(1, 1);
        let wxxy = jw.d3(0, 0, 1);
        let wxyy = jw.d3(0, 1, 1);
        wxx * wxy / (wx * wx) - wyy * wxy / (wy * wy) - wxxy / wx + wxyy / wy
    } else {
        // pair form: the scale-invariant assignment of the mixed partials
        let pj = web.pair_jets(x, y, 2)?;
        let (u, v) = (pj.u, pj.v);
        let (u0, v0) = (u.value(), v.value());
        u.d1(0) * u.d1(1) / (u0 * u0) - v.d1(1) * v.d1(0) / (v0 * v0) - u.d2(0, 1) / u0
            + v.d2(0, 1) / v0
    };

    let pj = web.pair_jets(x, y, 2)?;
    let mut r = pj.v.div(&pj.u)?;
    if web.ratio_sign() < 0.0 {
        r = r.neg();
    }
    let compact = r.ln().map_err(|e| locate(e, x, y))?.d2(0, 1);

    let rho = RhoValue { direct, compact };
    if rho.disagreement() > RHO_AGREEMENT_TOL {
        return Err(Error::RhoDisagreement {
            direct,
            compact,
            x,
            y,
        });
    }
    Ok(rho)
}

fn locate(e: Error, x: f64, y: f64) -> Error {
    match e {
        Error::Singular { what, .. } => Error::Singular { what, x, y },
        other => other,
    }
}

/// Ricci tensor of an arbitrary torsion-free connection by the standard
/// curvature contraction `Ric(d_j, d_l) = dx^k(R(d_k, d_l) d_j)`.
pub fn ricci_general(conn: &Connection2, point: (f64, f64), fd_step: f64) -> Result<[[f64; 2]; 2]> {
    let cj = conn.christoffels_grad(point.0, point.1, fd_step)?;
    let v = &cj.value;
    let g = &cj.grad;
    let mut ric = [[0.0; 2]; 2];
    for j in 0..2 {
        for l in 0..2 {
            let mut sum = 0.0;
            for k in 0..2 {
                sum += g[k][l + j][k] - g[k][k + j][l];
                for m in 0..2 {
                    sum += v[k][k + m] * v[m][l + j] - v[k][l + m] * v[m][k + j];
                }
            }
            ric[j][l] = sum;
        }
    }
    Ok(ric)
}

/// Curvature data at a point, as exported by the analysis front end.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CurvatureReport {
    pub point: (f64, f64),
    pub rho: RhoValue,
    pub ricci: [[f64; 2]; 2],
}

pub fn curvature_report(web: &WebSpec, point: (f64, f64), fd_step: f64) -> Result<CurvatureReport> {
    let rho = curvature_rho(web, point)?;
    let ricci = ricci_general(&web_connection(web)?, point, fd_step)?;
    Ok(CurvatureReport { point, rho, ricci })
}

// ---- vector fields and covariant differentiation ---------------------------

/// A vector field whose components carry first partials.
pub trait VectorField2 {
    /// Returns `(W, J)` with `J[i][j] = d_j W^i`.
    fn eval(&self, x: f64, y: f64) -> Result<([f64; 2], [[f64; 2]; 2])>;
}

/// Constant vector field.
pub struct ConstantField(pub [f64; 2]);

impl VectorField2 for ConstantField {
    fn eval(&self, _x: f64, _y: f64) -> Result<([f64; 2], [[f64; 2]; 2])> {
        Ok((self.0, [[0.0; 2]; 2]))
    }
}

/// The leaf field `V_t = w_y d/dx - (t/t2) w_x d/dy` of a canonical web.
pub struct LeafField<'a> {
    pub web: &'a WebSpec,
    pub t: f64,
}

impl VectorField2 for LeafField<'_> {
    fn eval(&self, x: f64, y: f64) -> Result<([f64; 2], [[f64; 2]; 2])> {
        let k = self.t / self.web.t2().affine_value().expect("canonical web");
        let pj = self.web.pair_jets(x, y, 1)?;
        let (u, v) = (pj.u, pj.v);
        Ok((
            [v.value(), -k * u.value()],
            [[v.d1(0), v.d1(1)], [-k * u.d1(0), -k * u.d1(1)]],
        ))
    }
}

/// Components given by expression-backed fields.
pub struct ExprField2 {
    pub fx: ScalarField,
    pub fy: ScalarField,
}

impl VectorField2 for ExprField2 {
    fn eval(&self, x: f64, y: f64) -> Result<([f64; 2], [[f64; 2]; 2])> {
        let jx = self.fx.jet(x, y, 1)?;
        let jy = self.fy.jet(x, y, 1)?;
        Ok((
            [jx.value(), jy.value()],
            [[jx.d1(0), jx.d1(1)], [jy.d1(0), jy.d1(1)]],
        ))
    }
}

/// `(nabla_V W)^i = V^j d_j W^i + G^i_{jk} V^j W^k` at a point.
pub fn covariant_derivative(
    conn: &Connection2,
    v: &dyn VectorField2,
    w: &dyn VectorField2,
    point: (f64, f64),
) -> Result<[f64; 2]> {
    let (vv, _) = v.eval(point.0, point.1)?;
    let (wv, wj) = w.eval(point.0, point.1)?;
    let gam = conn.christoffels(point.0, point.1)?;
    let mut out = [0.0; 2];
    for i in 0..2 {
        let mut acc = 0.0;
        for j in 0..2 {
            acc += vv[j] * wj[i][j];
            for k in 0..2 {
                acc += gam[i][j + k] * vv[j] * wv[k];
            }
        }
        out[i] = acc;
    }
    Ok(out)
}

/// The proportionality factor of the geodesy property:
/// `nabla_V V = lambda V` with `lambda = (w_y^2 w_xx - k w_x^2 w_yy)/(w_x w_y)`
/// for the leaf field at effective slope parameter `k = t/t2`.
pub fn geodesic_factor(web: &WebSpec, t: f64, x: f64, y: f64) -> Result<f64> {
    let k = t / web.t2().affine_value().expect("canonical web");
    let pj = web.pair_jets(x, y, 1)?;
    let (u, v) = (pj.u, pj.v);
    let (u0, v0) = (u.value(), v.value());
    Ok((v0 * v0 * u.d1(0) - k * u0 * u0 * v.d1(1)) / (u0 * v0))
}

// ---- parallel transport -----------------------------------------------------

/// Transports the frame (columns `X`, `Y`) along a polyline path, solving
/// `dV^i/ds + G^i_{jk} (dgamma^j/ds) V^k = 0` per column.
pub fn parallel_transport(
    conn: &Connection2,
    frame: [[f64; 2]; 2],
    path: &[[f64; 2]],
    ctrl: &StepControl,
) -> Result<[[f64; 2]; 2]> {
    if path.len() < 2 {
        return Ok(frame);
    }
    for p in path {
        if !conn.domain.contains_padded(p[0], p[1], 1e-12) {
            return Err(Error::OutOfDomain {
                x: p[0],
                y: p[1],
                x_min: conn.domain.x_min,
                x_max: conn.domain.x_max,
                y_min: conn.domain.y_min,
                y_max: conn.domain.y_max,
            });
        }
    }
    // state: [X^x, X^y, Y^x, Y^y]
    let mut state = [frame[0][0], frame[1][0], frame[0][1], frame[1][1]];
    for seg in path.windows(2) {
        let (p, q) = (seg[0], seg[1]);
        let d = [q[0] - p[0], q[1] - p[1]];
        if d[0] == 0.0 && d[1] == 0.0 {
            continue;
        }
        let mut rhs = |s: f64, v: &[f64; 4]| {
            let x = p[0] + s * d[0];
            let y = p[1] + s * d[1];
            let gam = conn.christoffels(x, y)?;
            let mut out = [0.0; 4];
            for col in 0..2 {
                for i in 0..2 {
                    let mut acc = 0.0;
                    for j in 0..2 {
                        for k in 0..2 {
                            acc -= gam[i][j + k] * d[j] * v[2 * col + k];
                        }
                    }
                    out[2 * col + i] = acc;
                }
            }
            Ok(out)
        };
        state = integrate(&mut rhs, 0.0, state, 1.0, ctrl, &mut |_, _| Ok(()))?;
    }
    Ok([[state[0], state[2]], [state[1], state[3]]])
}

/// Closed rectangle loop with corner `(x0, y0)` and side `h`, counterclockwise.
pub fn rectangle_loop(x0: f64, y0: f64, h: f64) -> Vec<[f64; 2]> {
    vec![
        [x0, y0],
        [x0 + h, y0],
        [x0 + h, y0 + h],
        [x0, y0 + h],
        [x0, y0],
    ]
}

/// Splits a transported frame into scalar part and relative deviation:
/// `M = c (Id + D)`, returning `(c, ||D||_F)`.
pub fn scalar_deviation(m: [[f64; 2]; 2]) -> (f64, f64) {
    let c = 0.5 * (m[0][0] + m[1][1]);
    if c == 0.0 {
        return (0.0, f64::INFINITY);
    }
    let d = [
        [m[0][0] / c - 1.0, m[0][1] / c],
        [m[1][0] / c, m[1][1] / c - 1.0],
    ];
    let norm =
        (d[0][0] * d[0][0] + d[0][1] * d[0][1] + d[1][0] * d[1][0] + d[1][1] * d[1][1]).sqrt();
    (c, norm)
}

// ---- Theorem-1 style reconstruction ----------------------------------------

/// Admission tolerance for the skew-Ricci check of `connection_to_web`.
pub const SKEW_ADMISSION_TOL: f64 = 1e-6;
const SKEW_ADMISSION_GRID: usize = 16;

/// Frame field produced by parallel transport from a basepoint, realizing the
/// direction family `t -> X + tY` that reconstructs the web of a connection.
pub struct FrameField {
    conn: Connection2,
    basepoint: [f64; 2],
    frame0: [[f64; 2]; 2],
    ctrl: StepControl,
    fd_step: f64,
}

impl FrameField {
    pub fn connection(&self) -> &Connection2 {
        &self.conn
    }

    pub fn basepoint(&self) -> [f64; 2] {
        self.basepoint
    }

    fn check_frame(&self, m: [[f64; 2]; 2], x: f64, y: f64) -> Result<[[f64; 2]; 2]> {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() < 1e-12 {
            return Err(Error::InternalCheck(format!(
                "transported frame degenerates at ({x}, {y})"
            )));
        }
        Ok(m)
    }

    /// Frame at `q` along the L-path: horizontal leg first, then vertical.
    pub fn frame_at(&self, q: [f64; 2]) -> Result<[[f64; 2]; 2]> {
        let path = vec![self.basepoint, [q[0], self.basepoint[1]], q];
        let m = parallel_transport(&self.conn, self.frame0, &path, &self.ctrl)?;
        self.check_frame(m, q[0], q[1])
    }

    /// Frame at `q` along the alternate path: vertical leg first.
    pub fn frame_at_alt(&self, q: [f64; 2]) -> Result<[[f64; 2]; 2]> {
        let path = vec![self.basepoint, [self.basepoint[0], q[1]], q];
        let m = parallel_transport(&self.conn, self.frame0, &path, &self.ctrl)?;
        self.check_frame(m, q[0], q[1])
    }

    /// Direction of the reconstructed foliation at parameter `t`.
    pub fn direction(&self, t: ProjParam, q: [f64; 2]) -> Result<[f64; 2]> {
        let f = self.frame_at(q)?;
        let (s, tt) = (t.s(), t.t());
        Ok([s * f[0][0] + tt * f[0][1], s * f[1][0] + tt * f[1][1]])
    }

    /// Frame and its exact x-derivative at `q`, via the variational equation
    /// along the vertical leg of the L-path. The y-derivative needs no
    /// integration: the columns are parallel along vertical lines, so
    /// `d_y F = -Gamma_y F` pointwise.
    pub fn frame_with_x_derivative(&self, q: [f64; 2]) -> Result<([[f64; 2]; 2], [[f64; 2]; 2])> {
        let [_bx, by] = self.basepoint;
        let [qx, qy] = q;
        // horizontal leg: F_h(x) with dF_h/dx = -Gamma_x F_h
        let horiz = vec![self.basepoint, [qx, by]];
        let f_h = parallel_transport(&self.conn, self.frame0, &horiz, &self.ctrl)?;
        // S(by) = dF_h/dx = -Gamma_x(qx, by) F_h
        let gam0 = self.conn.christoffels(qx, by)?;
        let s0 = mat_scale(mat_mul(gamma_dir_matrix(&gam0, 0), f_h), -1.0);
        // vertical leg: joint system for F and S = dF/dx
        let mut state = [
            f_h[0][0], f_h[1][0], f_h[0][1], f_h[1][1], s0[0][0], s0[1][0], s0[0][1], s0[1][1],
        ];
        if qy != by {
            let conn = &self.conn;
            let fd = self.fd_step;
            let dy = qy - by;
            let mut rhs = move |s: f64, v: &[f64; 8]| {
                let y = by + s * dy;
                let cj = conn.christoffels_grad(qx, y, fd)?;
                let gy = gamma_dir_matrix(&cj.value, 1);
                let mut dgy_dx = [[0.0; 2]; 2];
                for i in 0..2 {
                    for k in 0..2 {
                        dgy_dx[i][k] = cj.grad[i][1 + k][0];
                    }
                }
                let f = [[v[0], v[2]], [v[1], v[3]]];
                let sm = [[v[4], v[6]], [v[5], v[7]]];
                // dF/ds = -Gy F dy ; dS/ds = (-dGy/dx F - Gy S) dy
                let df = mat_scale(mat_mul(gy, f), -dy);
                let ds = mat_scale(mat_add(mat_mul(dgy_dx, f), mat_mul(gy, sm)), -dy);
                Ok([
                    df[0][0], df[1][0], df[0][1], df[1][1], ds[0][0], ds[1][0], ds[0][1], ds[1][1],
                ])
            };
            state = integrate(&mut rhs, 0.0, state, 1.0, &self.ctrl, &mut |_, _| Ok(()))?;
        }
        let f = [[state[0], state[2]], [state[1], state[3]]];
        let s = [[state[4], state[6]], [state[5], state[7]]];
        Ok((self.check_frame(f, qx, qy)?, s))
    }

    /// Residual of the auto-parallel property for the direction `X + tY` at
    /// `q`: `|nabla_W W x W| / (|nabla_W W| |W|)`, or 0 when `nabla_W W`
    /// vanishes below noise.
    pub fn autoparallel_residual(&self, t: ProjParam, q: [f64; 2]) -> Result<f64> {
        let (f, s) = self.frame_with_x_derivative(q)?;
        let gam = self.conn.christoffels(q[0], q[1])?;
        let gx = gamma_dir_matrix(&gam, 0);
        let (ts, tt) = (t.s(), t.t());
        let w = [ts * f[0][0] + tt * f[0][1], ts * f[1][0] + tt * f[1][1]];
        let dxw = [ts * s[0][0] + tt * s[0][1], ts * s[1][0] + tt * s[1][1]];
        // nabla_x W = d_x W + Gx W ; nabla_y W = 0 by construction
        let nxw = [
            dxw[0] + gx[0][0] * w[0] + gx[0][1] * w[1],
            dxw[1] + gx[1][0] * w[0] + gx[1][1] * w[1],
        ];
        // nabla_W W = W^x nabla_x W
        let nw = [w[0] * nxw[0], w[0] * nxw[1]];
        let nw_norm = nw[0].hypot(nw[1]);
        let w_norm = w[0].hypot(w[1]);
        if nw_norm <= 1e-12 * w_norm * w_norm {
            return Ok(0.0);
        }
        let cross = (nw[0] * w[1] - nw[1] * w[0]).abs();
        Ok(cross / (nw_norm * w_norm))
    }
}

fn gamma_dir_matrix(gam: &[[f64; 3]; 2], dir: usize) -> [[f64; 2]; 2] {
    // (Gamma_dir)^i_k = G^i_{dir k}
    let mut m = [[0.0; 2]; 2];
    for i in 0..2 {
        for k in 0..2 {
            m[i][k] = gam[i][dir + k];
        }
    }
    m
}

fn mat_mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn mat_add(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

fn mat_scale(a: [[f64; 2]; 2], k: f64) -> [[f64; 2]; 2] {
    [[a[0][0] * k, a[0][1] * k], [a[1][0] * k, a[1][1] * k]]
}

/// Reconstructs the direction family of a torsion-free connection with
/// skew-symmetric Ricci tensor. Rejects connections whose Ricci tensor fails
/// the skewness tolerance on a sample grid.
pub fn connection_to_web(
    conn: &Connection2,
    basepoint: [f64; 2],
    frame0: [[f64; 2]; 2],
) -> Result<FrameField> {
    connection_to_web_with(
        conn,
        basepoint,
        frame0,
        StepControl::with_tol(1e-12, 1e-14),
        1e-5,
    )
}

pub fn connection_to_web_with(
    conn: &Connection2,
    basepoint: [f64; 2],
    frame0: [[f64; 2]; 2],
    ctrl: StepControl,
    fd_step: f64,
) -> Result<FrameField> {
    let det = frame0[0][0] * frame0[1][1] - frame0[0][1] * frame0[1][0];
    if det.abs() < 1e-12 {
        return Err(Error::InvalidParameter(
            "initial frame must be non-degenerate".into(),
        ));
    }
    if !conn.domain.contains(basepoint[0], basepoint[1]) {
        return Err(Error::InvalidParameter("basepoint outside domain".into()));
    }
    for (x, y) in conn.domain.interior_grid(SKEW_ADMISSION_GRID, 0.02) {
        let ric = ricci_general(conn, (x, y), fd_step)?;
        let scale = ric.iter().flatten().fold(1.0f64, |m, &v| m.max(v.abs()));
        let residual = ric[0][0]
            .abs()
            .max(ric[1][1].abs())
            .max((ric[0][1] + ric[1][0]).abs());
        if residual > SKEW_ADMISSION_TOL * scale {
            return Err(Error::NonSkewRicci {
                residual,
                tol: SKEW_ADMISSION_TOL * scale,
                x,
                y,
            });
        }
    }
    Ok(FrameField {
        conn: conn.clone(),
        basepoint,
        frame0,
        ctrl,
        fd_step,
    })
}

/// Wong/Derdzinski normal form data: `f = ln|w_y/w_x|` and its gradient, with
/// the consistency assertion `G^x_xx = -f_x`, `G^y_yy = f_y`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WongReport {
    pub f: f64,
    pub f_x: f64,
    pub f_y: f64,
}

pub const WONG_CHECK_TOL: f64 = 1e-10;

pub fn wong_normal_form(web: &WebSpec, point: (f64, f64)) -> Result<WongReport> {
    let (x, y) = point;
    let pj = web.pair_jets(x, y, 1)?;
    let mut r = pj.v.div(&pj.u)?;
    if web.ratio_sign() < 0.0 {
        r = r.neg();
    }
    let f = r.ln().map_err(|e| locate(e, x, y))?;
    let report = WongReport {
        f: f.value(),
        f_x: f.d1(0),
        f_y: f.d1(1),
    };
    let conn = web_connection(web)?;
    let gxxx = conn.coeff(0, 0, 0).value(x, y)?;
    let gyyy = conn.coeff(1, 1, 1).value(x, y)?;
    let scale = report.f_x.abs().max(report.f_y.abs()).max(1.0);
    if (gxxx + report.f_x).abs() > WONG_CHECK_TOL * scale
        || (gyyy - report.f_y).abs() > WONG_CHECK_TOL * scale
    {
        return Err(Error::InternalCheck(format!(
            "Wong normal form mismatch at ({x}, {y}): G^x_xx = {gxxx}, -f_x = {}; G^y_yy = {gyyy}, f_y = {}",
            -report.f_x, report.f_y
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::web::{bilinear_web, flat_web};
    use approx::assert_relative_eq;

    const FD: f64 = 1e-5;

    #[test]
    fn flat_web_connection_vanishes() {
        let conn = web_connection(&flat_web(Rect::unit())).unwrap();
        for (x, y) in Rect::unit().interior_grid(4, 0.1) {
            let g = conn.christoffels(x, y).unwrap();
            for i in 0..2 {
                for s in 0..3 {
                    assert_eq!(g[i][s], 0.0);
                }
            }
        }
    }

    #[test]
    fn constant_curvature_christoffels_match_closed_form() {
        let c = 1.0;
        let web = constant_curvature_web(c, Rect::unit());
        let conn = web_connection(&web).unwrap();
        for (x, y) in Rect::unit().interior_grid(5, 0.05) {
            let g = conn.christoffels(x, y).unwrap();
            assert_relative_eq!(g[0][0], -c * y, epsilon = 1e-12);
            assert_relative_eq!(g[1][2], c * x, epsilon = 1e-12);
            assert_eq!(g[0][1], 0.0);
            assert_eq!(g[1][0], 0.0);
        }
    }

    #[test]
    fn bilinear_christoffels_hand_oracle() {
        let web = bilinear_web(Rect::unit()).unwrap();
        let conn = web_connection(&web).unwrap();
        for (x, y) in Rect::unit().interior_grid(4, 0.1) {
            let g = conn.christoffels(x, y).unwrap();
            assert_relative_eq!(g[0][0], -1.0 / (1.0 + x), max_relative = 1e-12);
            assert_relative_eq!(g[1][2], -1.0 / (1.0 + y), max_relative = 1e-12);
        }
    }

    #[test]
    fn rho_paths_agree_on_examples() {
        let flat = flat_web(Rect::unit());
        let r = curvature_rho(&flat, (0.4, 0.6)).unwrap();
        assert!(r.direct.abs() < 1e-14 && r.compact.abs() < 1e-14);

        for c in [1.0, -2.0] {
            let web = constant_curvature_web(c, Rect::unit());
            for (x, y) in Rect::unit().interior_grid(4, 0.1) {
                let r = curvature_rho(&web, (x, y)).unwrap();
                assert_relative_eq!(r.direct, c, max_relative = 1e-11);
                assert_relative_eq!(r.compact, c, max_relative = 1e-11);
            }
        }

        // bilinear: ln(w_y/w_x) = ln(1+x) - ln(1+y), mixed partial zero
        let web = bilinear_web(Rect::unit()).unwrap();
        let r = curvature_rho(&web, (0.3, 0.8)).unwrap();
        assert!(r.direct.abs() < 1e-12 && r.compact.abs() < 1e-12);
    }

    #[test]
    fn ricci_of_examples() {
        let zero = Connection2::zero(Rect::unit());
        let ric = ricci_general(&zero, (0.5, 0.5), FD).unwrap();
        assert_eq!(ric, [[0.0, 0.0], [0.0, 0.0]]);

        let web = constant_curvature_web(1.0, Rect::unit());
        let ric = ricci_general(&web_connection(&web).unwrap(), (0.3, 0.4), FD).unwrap();
        assert_relative_eq!(ric[0][1], 1.0, max_relative = 1e-10);
        assert_relative_eq!(ric[1][0], -1.0, max_relative = 1e-10);
        assert!(ric[0][0].abs() < 1e-12 && ric[1][1].abs() < 1e-12);

        let web = bilinear_web(Rect::unit()).unwrap();
        let ric = ricci_general(&web_connection(&web).unwrap(), (0.6, 0.2), FD).unwrap();
        for row in ric {
            for v in row {
                assert!(v.abs() < 1e-11, "expected zero Ricci, got {v}");
            }
        }
    }

    #[test]
    fn covariant_derivative_cases() {
        let zero = Connection2::zero(Rect::unit());
        let v = ConstantField([1.0, 2.0]);
        let d = covariant_derivative(&zero, &v, &v, (0.5, 0.5)).unwrap();
        assert_eq!(d, [0.0, 0.0]);

        // G^x_xx = 1 only, V = W = (1, 0): result (1, 0)
        let mut conn = Connection2::zero(Rect::unit());
        conn.set(
            0,
            0,
            0,
            Coeff::Expr(ScalarField::parse("1", Rect::unit()).unwrap()),
        );
        let e1 = ConstantField([1.0, 0.0]);
        let d = covariant_derivative(&conn, &e1, &e1, (0.3, 0.7)).unwrap();
        assert_eq!(d, [1.0, 0.0]);
    }

    #[test]
    fn leaves_are_geodesics_with_derived_factor() {
        let web = constant_curvature_web(1.0, Rect::unit());
        let conn = web_connection(&web).unwrap();
        for &t in &[-2.0, -1.0, 0.0, 0.5, 1.0, 3.0] {
            let leaf = LeafField { web: &web, t };
            for (x, y) in Rect::unit().interior_grid(3, 0.15) {
                let (w, _) = leaf.eval(x, y).unwrap();
                let nabla = covariant_derivative(&conn, &leaf, &leaf, (x, y)).unwrap();
                let lambda = geodesic_factor(&web, t, x, y).unwrap();
                assert_relative_eq!(
                    nabla[0],
                    lambda * w[0],
                    epsilon = 1e-11,
                    max_relative = 1e-9
                );
                assert_relative_eq!(
                    nabla[1],
                    lambda * w[1],
                    epsilon = 1e-11,
                    max_relative = 1e-9
                );
                // closed form for this web: u = 1, v = e^{xy} gives lambda = -t x
                assert_relative_eq!(lambda, -t * x, epsilon = 1e-12);
                // the factor is linear in t: the quadratic reading
                // (v^2 u_x - t^2 u^2 v_y)/(u v) = -t^2 x is measurably wrong
                if t != 0.0 && t != 1.0 {
                    let measured =
                        (nabla[0] * w[0] + nabla[1] * w[1]) / (w[0] * w[0] + w[1] * w[1]);
                    let quadratic_reading = -t * t * x;
                    assert!(
                        (measured - quadratic_reading).abs()
                            > 0.5 * (measured - lambda).abs().max(1e-3 * x.abs()),
                        "t={t}, x={x}: quadratic reading not excluded"
                    );
                }
            }
        }
    }

    #[test]
    fn transport_identity_cases() {
        let zero = Connection2::zero(Rect::unit());
        let frame = [[1.0, 0.5], [-0.25, 2.0]];
        let path = rectangle_loop(0.2, 0.2, 0.5);
        let out = parallel_transport(&zero, frame, &path, &StepControl::default()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(out[i][j], frame[i][j], epsilon = 1e-13);
            }
        }

        // constant-curvature web, x-axis segment: all Gamma terms vanish on it
        let web = constant_curvature_web(1.0, Rect::unit());
        let conn = web_connection(&web).unwrap();
        let path = vec![[0.0, 0.0], [1.0, 0.0]];
        let out = parallel_transport(
            &conn,
            [[1.0, 0.0], [0.0, 1.0]],
            &path,
            &StepControl::default(),
        )
        .unwrap();
        assert_relative_eq!(out[0][0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(out[1][1], 1.0, epsilon = 1e-12);
        assert!(out[0][1].abs() < 1e-12 && out[1][0].abs() < 1e-12);
    }

    #[test]
    fn holonomy_is_scalar_with_green_factor() {
        // web connections have exactly scalar holonomy: M = e^{-iint rho} Id
        let c = 1.0;
        let web = constant_curvature_web(c, Rect::unit());
        let conn = web_connection(&web).unwrap();
        for h in [0.3, 0.1] {
            let path = rectangle_loop(0.4, 0.45, h);
            let m = parallel_transport(
                &conn,
                [[1.0, 0.0], [0.0, 1.0]],
                &path,
                &StepControl::tight(),
            )
            .unwrap();
            let (cc, dev) = scalar_deviation(m);
            assert!(dev < 1e-11, "deviation {dev} at h={h}");
            assert_relative_eq!(cc, (-c * h * h).exp(), max_relative = 1e-9);
        }
    }

    #[test]
    fn reconstruction_matches_closed_form() {
        // C = 1 web from basepoint (0,0), frame Id:
        // X(q) = (1, 0), Y(q) = (0, e^{-xy}); alt path differs by e^{xy} Id.
        let web = constant_curvature_web(1.0, Rect::unit());
        let conn = web_connection(&web).unwrap();
        let ff = connection_to_web(&conn, [0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        for (x, y) in Rect::unit().interior_grid(3, 0.2) {
            let f = ff.frame_at([x, y]).unwrap();
            assert_relative_eq!(f[0][0], 1.0, epsilon = 1e-10);
            assert!(f[1][0].abs() < 1e-10);
            assert!(f[0][1].abs() < 1e-10);
            assert_relative_eq!(f[1][1], (-x * y).exp(), max_relative = 1e-9);

            let fa = ff.frame_at_alt([x, y]).unwrap();
            let factor = (x * y).exp();
            assert_relative_eq!(fa[0][0], factor * f[0][0], max_relative = 1e-9);
            assert_relative_eq!(fa[1][1], factor * f[1][1], max_relative = 1e-9);
        }
    }

    #[test]
    fn flat_reconstruction_directions() {
        let conn = Connection2::zero(Rect::unit());
        let ff = connection_to_web(&conn, [0.5, 0.5], [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        for &t in &[0.0, 1.0, -2.0] {
            // direction proportional to (1, t)
            let d = ff.direction(ProjParam::affine(t), [0.2, 0.8]).unwrap();
            assert_relative_eq!(d[1], t * d[0], epsilon = 1e-12);
            assert!(d[0].abs() > 0.1);
        }
    }

    #[test]
    fn reconstruction_directions_are_autoparallel() {
        let web = constant_curvature_web(1.0, Rect::unit());
        let conn = web_connection(&web).unwrap();
        let ff = connection_to_web(&conn, [0.1, 0.1], [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        for &t in &[-1.0, 0.0, 0.5, 2.0] {
            for (x, y) in Rect::unit().interior_grid(2, 0.25) {
                let res = ff
                    .autoparallel_residual(ProjParam::affine(t), [x, y])
                    .unwrap();
                assert!(res < 1e-8, "residual {res} at t={t} ({x},{y})");
            }
        }
    }

    #[test]
    fn non_skew_connection_is_rejected() {
        let web = constant_curvature_web(1.0, Rect::unit());
        let conn = web_connection(&web)
            .unwrap()
            .perturb_gamma_xxx(ScalarField::parse("0.1*y", Rect::unit()).unwrap());
        match connection_to_web(&conn, [0.5, 0.5], [[1.0, 0.0], [0.0, 1.0]]) {
            Err(Error::NonSkewRicci { .. }) => {}
            other => panic!("expected rejection, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn wong_normal_form_examples() {
        let flat = flat_web(Rect::unit());
        let w = wong_normal_form(&flat, (0.3, 0.3)).unwrap();
        assert_eq!(w.f, 0.0);
        assert_eq!(w.f_x, 0.0);

        let c = -2.0;
        let web = constant_curvature_web(c, Rect::unit());
        let (x, y) = (0.4, 0.7);
        let w = wong_normal_form(&web, (x, y)).unwrap();
        assert_relative_eq!(w.f, c * x * y, max_relative = 1e-12);
        assert_relative_eq!(w.f_x, c * y, max_relative = 1e-12);
        assert_relative_eq!(w.f_y, c * x, max_relative = 1e-12);

        let web = bilinear_web(Rect::unit()).unwrap();
        let w = wong_normal_form(&web, (x, y)).unwrap();
        assert_relative_eq!(w.f, (1.0 + x).ln() - (1.0 + y).ln(), max_relative = 1e-12);
    }

    #[test]
    fn negative_ratio_web_curvature_and_wong() {
        // w_y < 0 < w_x: the fixed sign branch of ln|w_y/w_x| must make both
        // rho routes and the normal form agree
        let w = ScalarField::parse("x - y - 0.3*x^2*y", Rect::unit()).unwrap();
        let web = crate::web::from_3web(w, ProjParam::affine(1.0)).unwrap();
        assert_eq!(web.ratio_sign(), -1.0);
        for (x, y) in Rect::unit().interior_grid(3, 0.1) {
            let r = curvature_rho(&web, (x, y)).unwrap();
            assert!(r.disagreement() < 1e-9);
            let wong = wong_normal_form(&web, (x, y)).unwrap();
            let expect = ((1.0 + 0.3 * x * x) / (1.0 - 0.6 * x * y)).ln();
            assert_relative_eq!(wong.f, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn constant_curvature_zero_is_flat() {
        let web = constant_curvature_web(0.0, Rect::unit());
        let conn = web_connection(&web).unwrap();
        let g = conn.christoffels(0.3, 0.9).unwrap();
        assert_eq!(g, [[0.0; 3]; 2]);
        let r = curvature_rho(&web, (0.5, 0.2)).unwrap();
        assert_eq!(r.direct, 0.0);
        assert_eq!(r.compact, 0.0);
    }
}
