//! Planar web geometry.
//!
//! This crate computes with Veronese webs on a coordinate rectangle and with
//! the structures they induce:
//!
//! - the web itself: a one-parameter family of foliations generated by a
//!   function `w(x, y)` with nowhere-vanishing partials ([`web`]);
//! - the associated torsion-free connection, whose non-zero Christoffel
//!   symbols are `G^x_xx = (w_y w_xx - w_x w_xy)/(w_x w_y)` and
//!   `G^y_yy = (w_x w_yy - w_y w_xy)/(w_x w_y)`, together with its curvature,
//!   skew-symmetric Ricci tensor and Wong normal form ([`connection`]);
//! - the projective structure recorded as the second-order ODE
//!   `y'' = G^x_xx y' - G^y_yy (y')^2` and its rectification to the total
//!   derivative of a first-order ODE ([`ode`]);
//! - the dual second-order ODE on the space of leaves, built numerically by
//!   first-integral elimination, and the invariant `K0` whose vanishing
//!   characterizes such duals ([`duality`]).
//!
//! All derivatives are exact: fields are expressions evaluated through
//! truncated Taylor jets ([`jet`], [`expr`]), so the only numerical noise in
//! the pipeline comes from the explicitly controlled integrators and
//! finite-difference stencils.

pub mod connection;
pub mod duality;
pub mod error;
pub mod expr;
pub mod field;
pub mod integrate;
pub mod jet;
pub mod ode;
pub mod sample;
pub mod solve;
pub mod verify;
pub mod web;

pub use error::{Error, Result};
pub use expr::{parse_expression, Expression};
pub use field::{eval_jet, Rect, ScalarField};
pub use integrate::StepControl;
pub use jet::{Jet, JetSpace};
pub use web::{from_3web, DirectionField, ProjParam, WebSpec};
