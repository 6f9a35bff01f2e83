//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Malformed input text; `offset` is the byte offset of the offending token.
    #[error("syntax error at byte offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    /// An identifier that is neither a declared variable nor a known function.
    #[error("unknown identifier `{name}` at byte offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("invalid expression: {0}")]
    InvalidExpression(String),

    /// Division by zero, log/sqrt domain violation, overflow to non-finite.
    #[error("singular evaluation: {what} at ({x}, {y})")]
    Singular { what: String, x: f64, y: f64 },

    #[error("point ({x}, {y}) outside domain [{x_min}, {x_max}] x [{y_min}, {y_max}]")]
    OutOfDomain {
        x: f64,
        y: f64,
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },

    /// w_x or w_y vanishes (or changes sign) somewhere on the sample grid.
    #[error("transversality violation: {which} {how} at grid point ({x}, {y})")]
    Transversality {
        which: String,
        how: String,
        x: f64,
        y: f64,
    },

    #[error("integration step underflow near s = {s}")]
    StepUnderflow { s: f64 },

    #[error("integration exceeded {0} steps")]
    MaxSteps(usize),

    #[error("leaf (t = {t}) exits the domain near ({x}, {y})")]
    LeafExitsDomain { t: f64, x: f64, y: f64 },

    #[error("geodesic exits the domain near ({x}, {y})")]
    GeodesicExitsDomain { x: f64, y: f64 },

    #[error("Newton iteration failed to converge: {0}")]
    NewtonDiverged(String),

    #[error("ill-conditioned Jacobian (det = {det:e})")]
    IllConditioned { det: f64 },

    #[error("monotone inversion failed: {0}")]
    InversionFailure(String),

    /// Ricci tensor of the input connection is not skew-symmetric.
    #[error(
        "connection rejected: Ricci tensor not skew-symmetric (residual {residual:e} > {tol:e} at ({x}, {y}))"
    )]
    NonSkewRicci {
        residual: f64,
        tol: f64,
        x: f64,
        y: f64,
    },

    /// Operation requires a web in the canonical (potential or coframe-pair) form.
    #[error("operation `{0}` requires a canonical web (not available after a Moebius reparametrization)")]
    NonCanonicalWeb(&'static str),

    /// The two evaluation routes for rho disagree; signals an implementation bug.
    #[error(
        "internal disagreement: rho paths differ at ({x}, {y}): direct {direct} vs compact {compact}"
    )]
    RhoDisagreement {
        direct: f64,
        compact: f64,
        x: f64,
        y: f64,
    },

    /// Internal consistency assertion failed; signals an implementation bug.
    #[error("internal check failed: {0}")]
    InternalCheck(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
