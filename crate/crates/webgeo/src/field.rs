//! Scalar fields on a coordinate rectangle, evaluated through jets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse_expression, Expression};
use crate::jet::{Jet, JetSpace};

/// Axis-aligned rectangle `[x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Rect> {
        if !(x_min < x_max && y_min < y_max)
            || !(x_min.is_finite() && x_max.is_finite() && y_min.is_finite() && y_max.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "degenerate rectangle [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Rect {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    /// The unit square, the default domain for builtin webs.
    pub fn unit() -> Rect {
        Rect {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    /// Containment with a relative margin; integrator stages may legitimately
    /// probe slightly past the box.
    pub fn contains_padded(&self, x: f64, y: f64, rel_pad: f64) -> bool {
        let px = rel_pad * self.width();
        let py = rel_pad * self.height();
        x >= self.x_min - px && x <= self.x_max + px && y >= self.y_min - py && y <= self.y_max + py
    }

    /// `n x n` uniform grid including the boundary.
    pub fn grid(&self, n: usize) -> Vec<(f64, f64)> {
        assert!(n >= 2);
        let mut pts = Vec::with_capacity(n * n);
        for i in 0..n {
            let x = self.x_min + self.width() * i as f64 / (n - 1) as f64;
            for j in 0..n {
                let y = self.y_min + self.height() * j as f64 / (n - 1) as f64;
                pts.push((x, y));
            }
        }
        pts
    }

    /// Interior points, a margin fraction in from each edge.
    pub fn interior_grid(&self, n: usize, margin: f64) -> Vec<(f64, f64)> {
        assert!(n >= 1);
        let x0 = self.x_min + margin * self.width();
        let x1 = self.x_max - margin * self.width();
        let y0 = self.y_min + margin * self.height();
        let y1 = self.y_max - margin * self.height();
        let mut pts = Vec::with_capacity(n * n);
        for i in 0..n {
            let fx = if n == 1 {
                0.5
            } else {
                i as f64 / (n - 1) as f64
            };
            for j in 0..n {
                let fy = if n == 1 {
                    0.5
                } else {
                    j as f64 / (n - 1) as f64
                };
                pts.push((x0 + (x1 - x0) * fx, y0 + (y1 - y0) * fy));
            }
        }
        pts
    }
}

/// Relative padding allowed when evaluating fields just outside their box.
/// Solution corridors are still enforced strictly by the integrators.
const EVAL_PAD: f64 = 0.05;

/// A twice-to-thrice differentiable function of `(x, y)` on a rectangle,
/// backed by an expression and evaluated through jet arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    expr: Expression,
    domain: Rect,
}

impl ScalarField {
    pub fn new(expr: Expression, domain: Rect) -> Result<ScalarField> {
        if expr.vars().len() != 2 {
            return Err(Error::InvalidParameter(format!(
                "ScalarField expects exactly 2 variables, got {}",
                expr.vars().len()
            )));
        }
        Ok(ScalarField { expr, domain })
    }

    /// Parses `text` over variables `(x, y)`.
    pub fn parse(text: &str, domain: Rect) -> Result<ScalarField> {
        let expr = parse_expression(text, &["x", "y"])?;
        ScalarField::new(expr, domain)
    }

    pub fn expr(&self) -> &Expression {
        &self.expr
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn with_domain(&self, domain: Rect) -> ScalarField {
        ScalarField {
            expr: self.expr.clone(),
            domain,
        }
    }

    fn check_domain(&self, x: f64, y: f64) -> Result<()> {
        if !self.domain.contains_padded(x, y, EVAL_PAD) {
            return Err(Error::OutOfDomain {
                x,
                y,
                x_min: self.domain.x_min,
                x_max: self.domain.x_max,
                y_min: self.domain.y_min,
                y_max: self.domain.y_max,
            });
        }
        Ok(())
    }

    /// Value-only evaluation (the fast path inside ODE right-hand sides).
    pub fn value(&self, x: f64, y: f64) -> Result<f64> {
        self.check_domain(x, y)?;
        self.expr.eval_value(&[x, y]).map_err(|e| locate(e, x, y))
    }

    /// Jet of the field at `(x, y)` with all partials up to `order`.
    pub fn jet(&self, x: f64, y: f64, order: usize) -> Result<Jet> {
        self.check_domain(x, y)?;
        let space = JetSpace::get(2, order);
        self.expr
            .eval_jet(
                space,
                &[Jet::variable(space, 0, x), Jet::variable(space, 1, y)],
            )
            .map_err(|e| locate(e, x, y))
    }
}

/// Attaches a concrete evaluation point to a singularity error.
fn locate(e: Error, x: f64, y: f64) -> Error {
    match e {
        Error::Singular { what, .. } => Error::Singular { what, x, y },
        other => other,
    }
}

/// Order-3 jet of a field at a point: the derivative supplier for every
/// curvature and connection formula.
pub fn eval_jet(field: &ScalarField, point: (f64, f64)) -> Result<Jet> {
    field.jet(point.0, point.1, 3)
}
