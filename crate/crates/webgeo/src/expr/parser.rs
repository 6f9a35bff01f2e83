//! Recursive-descent parser.
//!
//! Precedence (tightest first): `^`, unary `-`, `* /`, `+ -`. Binary operators
//! of equal precedence associate to the left, `^` to the right. The exponent of
//! `^` must be a constant (variable-free) subexpression; it is folded to a
//! literal at parse time, which is what keeps jet propagation closed-form.

use super::lexer::{tokenize, Token, TokenKind};
use super::{BinaryOp, ExprNode, Expression, UnaryOp};
use crate::error::{Error, Result};

pub fn parse_expression(text: &str, variables: &[&str]) -> Result<Expression> {
    if text.trim().is_empty() {
        return Err(Error::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    for (i, a) in variables.iter().enumerate() {
        for b in &variables[i + 1..] {
            if a == b {
                return Err(Error::InvalidParameter(format!(
                    "duplicate variable name `{a}`"
                )));
            }
        }
    }
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        end_offset: text.len(),
        variables,
    };
    let root = parser.parse_sum()?;
    if parser.pos != tokens.len() {
        let t = &tokens[parser.pos];
        return Err(Error::Syntax {
            offset: t.offset,
            message: format!("unexpected token `{}`", kind_name(&t.kind)),
        });
    }
    Ok(Expression::from_parts(
        variables.iter().map(|s| s.to_string()).collect(),
        root,
    ))
}

fn kind_name(kind: &TokenKind) -> String {
    match kind {
        TokenKind::Number(v) => format!("{v}"),
        TokenKind::Ident(s) => s.clone(),
        TokenKind::Plus => "+".into(),
        TokenKind::Minus => "-".into(),
        TokenKind::Star => "*".into(),
        TokenKind::Slash => "/".into(),
        TokenKind::Caret => "^".into(),
        TokenKind::LParen => "(".into(),
        TokenKind::RParen => ")".into(),
    }
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    end_offset: usize,
    variables: &'a [&'a str],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next_offset(&self) -> usize {
        self.peek().map(|t| t.offset).unwrap_or(self.end_offset)
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek().map(|t| &t.kind) == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if self.eat(&TokenKind::RParen) {
            Ok(())
        } else {
            Err(Error::Syntax {
                offset: self.next_offset(),
                message: "expected `)`".into(),
            })
        }
    }

    fn parse_sum(&mut self) -> Result<ExprNode> {
        let mut node = self.parse_term()?;
        loop {
            if self.eat(&TokenKind::Plus) {
                let rhs = self.parse_term()?;
                node = ExprNode::Binary(BinaryOp::Add, Box::new(node), Box::new(rhs));
            } else if self.eat(&TokenKind::Minus) {
                let rhs = self.parse_term()?;
                node = ExprNode::Binary(BinaryOp::Sub, Box::new(node), Box::new(rhs));
            } else {
                break;
            }
        }
        Ok(node)
    }

    fn parse_term(&mut self) -> Result<ExprNode> {
        let mut node = self.parse_unary()?;
        loop {
            if self.eat(&TokenKind::Star) {
                let rhs = self.parse_unary()?;
                node = ExprNode::Binary(BinaryOp::Mul, Box::new(node), Box::new(rhs));
            } else if self.eat(&TokenKind::Slash) {
                let rhs = self.parse_unary()?;
                node = ExprNode::Binary(BinaryOp::Div, Box::new(node), Box::new(rhs));
            } else {
                break;
            }
        }
        Ok(node)
    }

    fn parse_unary(&mut self) -> Result<ExprNode> {
        if self.eat(&TokenKind::Minus) {
            let inner = self.parse_unary()?;
            // canonical form: a negated literal is a literal
            if let ExprNode::Literal(v) = inner {
                return Ok(ExprNode::Literal(-v));
            }
            return Ok(ExprNode::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<ExprNode> {
        let base = self.parse_atom()?;
        if self.eat(&TokenKind::Caret) {
            let exp_offset = self.next_offset();
            let exponent = self.parse_unary()?; // right-associative via recursion
            let folded = fold_constant(&exponent).ok_or_else(|| Error::Syntax {
                offset: exp_offset,
                message: "exponent of `^` must be a constant".into(),
            })?;
            if !folded.is_finite() {
                return Err(Error::Syntax {
                    offset: exp_offset,
                    message: "exponent of `^` is not finite".into(),
                });
            }
            return Ok(ExprNode::Binary(
                BinaryOp::Pow,
                Box::new(base),
                Box::new(ExprNode::Literal(folded)),
            ));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<ExprNode> {
        let offset = self.next_offset();
        let token = match self.peek() {
            Some(t) => t.clone(),
            None => {
                return Err(Error::Syntax {
                    offset,
                    message: "unexpected end of input".into(),
                })
            }
        };
        match token.kind {
            TokenKind::Number(v) => {
                self.pos += 1;
                Ok(ExprNode::Literal(v))
            }
            TokenKind::LParen => {
                self.pos += 1;
                let inner = self.parse_sum()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                self.pos += 1;
                if self.eat(&TokenKind::LParen) {
                    let func = match name.as_str() {
                        "exp" => UnaryOp::Exp,
                        "ln" => UnaryOp::Ln,
                        "sin" => UnaryOp::Sin,
                        "cos" => UnaryOp::Cos,
                        "sqrt" => UnaryOp::Sqrt,
                        _ => {
                            return Err(Error::UnknownIdentifier {
                                name,
                                offset: token.offset,
                            })
                        }
                    };
                    let arg = self.parse_sum()?;
                    self.expect_rparen()?;
                    Ok(ExprNode::Unary(func, Box::new(arg)))
                } else {
                    match self.variables.iter().position(|v| *v == name) {
                        Some(idx) => Ok(ExprNode::Var(idx)),
                        None => Err(Error::UnknownIdentifier {
                            name,
                            offset: token.offset,
                        }),
                    }
                }
            }
            other => Err(Error::Syntax {
                offset: token.offset,
                message: format!("unexpected token `{}`", kind_name(&other)),
            }),
        }
    }
}

/// Evaluates a variable-free subtree to a literal; `None` if it mentions a
/// variable or fails to evaluate.
fn fold_constant(node: &ExprNode) -> Option<f64> {
    match node {
        ExprNode::Literal(v) => Some(*v),
        ExprNode::Var(_) => None,
        ExprNode::Unary(op, inner) => {
            let v = fold_constant(inner)?;
            Some(match op {
                UnaryOp::Neg => -v,
                UnaryOp::Exp => v.exp(),
                UnaryOp::Ln => v.ln(),
                UnaryOp::Sin => v.sin(),
                UnaryOp::Cos => v.cos(),
                UnaryOp::Sqrt => v.sqrt(),
            })
        }
        ExprNode::Binary(op, l, r) => {
            let a = fold_constant(l)?;
            let b = fold_constant(r)?;
            Some(match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div => a / b,
                BinaryOp::Pow => a.powf(b),
            })
        }
    }
}
