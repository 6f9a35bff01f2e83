//! Expression front end: a small AST over declared variables, with a parser,
//! a printer whose output reparses to the identical tree, and exact evaluation
//! either on plain `f64` or on [`Jet`]s.
//!
//! Grammar (EBNF, also documented in the repository README):
//!
//! ```text
//! expression = term , { ("+" | "-") , term } ;
//! term       = unary , { ("*" | "/") , unary } ;
//! unary      = "-" , unary | power ;
//! power      = atom , [ "^" , unary ] ;      (* exponent must be constant *)
//! atom       = number | identifier | identifier , "(" , expression , ")"
//!            | "(" , expression , ")" ;
//! ```
//!
//! Functions: `exp`, `ln`, `sin`, `cos`, `sqrt`. The exponent of `^` is folded
//! to a literal at parse time and rejected if it mentions a variable.

mod lexer;
mod parser;

pub use parser::parse_expression;

use std::fmt;

use crate::error::{Error, Result};
use crate::jet::{Jet, JetSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Expression tree node. Variables are indices into the declared list.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprNode {
    Literal(f64),
    Var(usize),
    Unary(UnaryOp, Box<ExprNode>),
    Binary(BinaryOp, Box<ExprNode>, Box<ExprNode>),
}

/// An expression over a declared variable list.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    vars: Vec<String>,
    root: ExprNode,
}

impl Expression {
    pub fn from_parts(vars: Vec<String>, root: ExprNode) -> Expression {
        debug_assert!(max_var_index(&root).is_none_or(|m| m < vars.len()));
        Expression { vars, root }
    }

    /// Parses `text` over the given variables; convenience re-export.
    pub fn parse(text: &str, variables: &[&str]) -> Result<Expression> {
        parse_expression(text, variables)
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn root(&self) -> &ExprNode {
        &self.root
    }

    /// Plain value evaluation. Singularities are structured errors, never NaN.
    pub fn eval_value(&self, values: &[f64]) -> Result<f64> {
        debug_assert_eq!(values.len(), self.vars.len());
        let v = eval_value_node(&self.root, values)?;
        if !v.is_finite() {
            return Err(singular(format!("non-finite value {v}"), values));
        }
        Ok(v)
    }

    /// Jet evaluation: `args[i]` is the jet assigned to variable `i`. All args
    /// must live in `space`.
    pub fn eval_jet(&self, space: &'static JetSpace, args: &[Jet]) -> Result<Jet> {
        debug_assert_eq!(args.len(), self.vars.len());
        let j = eval_jet_node(&self.root, space, args)?;
        if !j.is_finite() {
            let values: Vec<f64> = args.iter().map(|a| a.value()).collect();
            return Err(singular("non-finite jet coefficient".into(), &values));
        }
        Ok(j)
    }
}

fn singular(what: String, values: &[f64]) -> Error {
    Error::Singular {
        what,
        x: values.first().copied().unwrap_or(f64::NAN),
        y: values.get(1).copied().unwrap_or(f64::NAN),
    }
}

fn max_var_index(node: &ExprNode) -> Option<usize> {
    match node {
        ExprNode::Literal(_) => None,
        ExprNode::Var(i) => Some(*i),
        ExprNode::Unary(_, inner) => max_var_index(inner),
        ExprNode::Binary(_, l, r) => match (max_var_index(l), max_var_index(r)) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        },
    }
}

fn eval_value_node(node: &ExprNode, values: &[f64]) -> Result<f64> {
    Ok(match node {
        ExprNode::Literal(v) => *v,
        ExprNode::Var(i) => values[*i],
        ExprNode::Unary(op, inner) => {
            let u = eval_value_node(inner, values)?;
            match op {
                UnaryOp::Neg => -u,
                UnaryOp::Exp => u.exp(),
                UnaryOp::Ln => {
                    if u <= 0.0 {
                        return Err(singular(format!("ln of non-positive value {u}"), values));
                    }
                    u.ln()
                }
                UnaryOp::Sin => u.sin(),
                UnaryOp::Cos => u.cos(),
                UnaryOp::Sqrt => {
                    if u < 0.0 {
                        return Err(singular(format!("sqrt of negative value {u}"), values));
                    }
                    u.sqrt()
                }
            }
        }
        ExprNode::Binary(op, l, r) => {
            let a = eval_value_node(l, values)?;
            let b = eval_value_node(r, values)?;
            match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div => {
                    if b == 0.0 {
                        return Err(singular("division by zero".into(), values));
                    }
                    a / b
                }
                BinaryOp::Pow => {
                    if is_integer(b) {
                        if a == 0.0 && b < 0.0 {
                            return Err(singular("zero raised to negative power".into(), values));
                        }
                        a.powi(b as i32)
                    } else {
                        if a <= 0.0 {
                            return Err(singular(
                                format!("real power of non-positive base {a}"),
                                values,
                            ));
                        }
                        a.powf(b)
                    }
                }
            }
        }
    })
}

fn is_integer(v: f64) -> bool {
    v.fract() == 0.0 && v.abs() < 2.0_f64.powi(31)
}

fn eval_jet_node(node: &ExprNode, space: &'static JetSpace, args: &[Jet]) -> Result<Jet> {
    Ok(match node {
        ExprNode::Literal(v) => Jet::constant(space, *v),
        ExprNode::Var(i) => args[*i],
        ExprNode::Unary(op, inner) => {
            let u = eval_jet_node(inner, space, args)?;
            match op {
                UnaryOp::Neg => u.neg(),
                UnaryOp::Exp => u.exp(),
                UnaryOp::Ln => u.ln()?,
                UnaryOp::Sin => u.sin(),
                UnaryOp::Cos => u.cos(),
                UnaryOp::Sqrt => u.sqrt()?,
            }
        }
        ExprNode::Binary(op, l, r) => {
            let a = eval_jet_node(l, space, args)?;
            match op {
                BinaryOp::Add => a.add(&eval_jet_node(r, space, args)?),
                BinaryOp::Sub => a.sub(&eval_jet_node(r, space, args)?),
                BinaryOp::Mul => a.mul(&eval_jet_node(r, space, args)?),
                BinaryOp::Div => a.div(&eval_jet_node(r, space, args)?)?,
                BinaryOp::Pow => {
                    let e = match r.as_ref() {
                        ExprNode::Literal(v) => *v,
                        _ => {
                            return Err(Error::InvalidExpression(
                                "exponent of `^` must be a literal".into(),
                            ))
                        }
                    };
                    if is_integer(e) {
                        a.powi(e as i64)?
                    } else {
                        a.powf(e)?
                    }
                }
            }
        }
    })
}

// ---- printer -------------------------------------------------------------

fn precedence(node: &ExprNode) -> u8 {
    match node {
        ExprNode::Binary(BinaryOp::Add | BinaryOp::Sub, _, _) => 1,
        ExprNode::Binary(BinaryOp::Mul | BinaryOp::Div, _, _) => 2,
        ExprNode::Unary(UnaryOp::Neg, _) => 3,
        ExprNode::Literal(v) if *v < 0.0 => 3, // prints with a leading '-'
        ExprNode::Binary(BinaryOp::Pow, _, _) => 4,
        _ => 5,
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, node: &ExprNode, vars: &[String]) -> fmt::Result {
    match node {
        ExprNode::Literal(v) => write!(f, "{v}"),
        ExprNode::Var(i) => write!(f, "{}", vars[*i]),
        ExprNode::Unary(UnaryOp::Neg, inner) => {
            write!(f, "-")?;
            write_child(f, inner, vars, precedence(node) > precedence(inner))
        }
        ExprNode::Unary(op, inner) => {
            let name = match op {
                UnaryOp::Exp => "exp",
                UnaryOp::Ln => "ln",
                UnaryOp::Sin => "sin",
                UnaryOp::Cos => "cos",
                UnaryOp::Sqrt => "sqrt",
                UnaryOp::Neg => unreachable!(),
            };
            write!(f, "{name}(")?;
            write_node(f, inner, vars)?;
            write!(f, ")")
        }
        ExprNode::Binary(op, l, r) => {
            let p = precedence(node);
            let (sym, spaced) = match op {
                BinaryOp::Add => ("+", true),
                BinaryOp::Sub => ("-", true),
                BinaryOp::Mul => ("*", false),
                BinaryOp::Div => ("/", false),
                BinaryOp::Pow => ("^", false),
            };
            // Pow is right-associative: parenthesize the left child at equal
            // precedence; everything else is left-associative.
            let left_parens = if *op == BinaryOp::Pow {
                precedence(l) <= p
            } else {
                precedence(l) < p
            };
            // All binaries parse left-associatively (the parser folds Pow's
            // exponent to a literal), so a right child at equal precedence
            // must be parenthesized to reproduce the same tree.
            let right_parens = match op {
                BinaryOp::Pow => precedence(r) < p,
                _ => precedence(r) <= p,
            };
            write_child(f, l, vars, left_parens)?;
            if spaced {
                write!(f, " {sym} ")?;
            } else {
                write!(f, "{sym}")?;
            }
            write_child(f, r, vars, right_parens)
        }
    }
}

fn write_child(
    f: &mut fmt::Formatter<'_>,
    node: &ExprNode,
    vars: &[String],
    parens: bool,
) -> fmt::Result {
    if parens {
        write!(f, "(")?;
        write_node(f, node, vars)?;
        write!(f, ")")
    } else {
        write_node(f, node, vars)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root, &self.vars)
    }
}

// ---- programmatic builders ------------------------------------------------

/// Small helpers for building expression trees in code (builtin webs, random
/// webs, Moebius coframe combinations).
pub mod build {
    use super::{BinaryOp, ExprNode, UnaryOp};

    pub fn lit(v: f64) -> ExprNode {
        ExprNode::Literal(v)
    }

    pub fn var(i: usize) -> ExprNode {
        ExprNode::Var(i)
    }

    pub fn add(a: ExprNode, b: ExprNode) -> ExprNode {
        ExprNode::Binary(BinaryOp::Add, Box::new(a), Box::new(b))
    }

    pub fn sub(a: ExprNode, b: ExprNode) -> ExprNode {
        ExprNode::Binary(BinaryOp::Sub, Box::new(a), Box::new(b))
    }

    pub fn mul(a: ExprNode, b: ExprNode) -> ExprNode {
        ExprNode::Binary(BinaryOp::Mul, Box::new(a), Box::new(b))
    }

    pub fn exp(a: ExprNode) -> ExprNode {
        ExprNode::Unary(UnaryOp::Exp, Box::new(a))
    }

    pub fn scale(k: f64, a: ExprNode) -> ExprNode {
        if k == 1.0 {
            a
        } else {
            mul(lit(k), a)
        }
    }
}
