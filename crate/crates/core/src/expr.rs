//! A small arithmetic expression language for potentials and basic maps.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! `x` is the variable, `pi` is a constant, and any other identifier is a
//! named parameter that must be bound before evaluation. `^` is right
//! associative and binds tighter than unary minus, so `-x^2` is `-(x^2)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::precision::{Func, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("unbound parameters: {}", .0.join(", "))]
    Unbound(Vec<String>),
    #[error("expression evaluated to a non-finite value at x = {x}")]
    NonFinite { x: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => " + ",
            BinOp::Sub => " - ",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    /// Numeric literal; the source text is kept so extended-precision
    /// evaluation sees the exact decimal.
    Num {
        text: String,
        value: f64,
    },
    Var,
    Pi,
    Param(String),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    pub fn num(value: f64) -> Node {
        Node::Num {
            text: format!("{value}"),
            value,
        }
    }

    /// Integer value of a literal exponent, if it is one.
    fn integer_exponent(&self) -> Option<i32> {
        match self {
            Node::Num { value, .. } if value.fract() == 0.0 && value.abs() <= 4096.0 => {
                Some(*value as i32)
            }
            Node::Neg(inner) => inner.integer_exponent().map(|k| -k),
            _ => None,
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Node::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Node::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Node::Neg(_) => 3,
            Node::Bin(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }

    fn eval<T: Scalar>(&self, x: &T, ctx: T::Ctx) -> Result<T, ExprError> {
        Ok(match self {
            Node::Num { text, value } => T::literal(text, *value, ctx),
            Node::Var => x.clone(),
            Node::Pi => T::pi(ctx),
            Node::Param(name) => return Err(ExprError::Unbound(vec![name.clone()])),
            Node::Neg(inner) => inner.eval(x, ctx)?.neg(),
            Node::Call(f, arg) => arg.eval(x, ctx)?.apply(*f),
            Node::Bin(op, lhs, rhs) => {
                let a = lhs.eval(x, ctx)?;
                if *op == BinOp::Pow {
                    if let Some(k) = rhs.integer_exponent() {
                        return Ok(a.powi(k));
                    }
                }
                let b = rhs.eval(x, ctx)?;
                match op {
                    BinOp::Add => a.add(&b),
                    BinOp::Sub => a.sub(&b),
                    BinOp::Mul => a.mul(&b),
                    BinOp::Div => a.div(&b),
                    BinOp::Pow => a.powf(&b),
                }
            }
        })
    }

    fn collect_params(&self, out: &mut BTreeSet<String>) {
        match self {
            Node::Param(name) => {
                out.insert(name.clone());
            }
            Node::Neg(inner) | Node::Call(_, inner) => inner.collect_params(out),
            Node::Bin(_, a, b) => {
                a.collect_params(out);
                b.collect_params(out);
            }
            Node::Num { .. } | Node::Var | Node::Pi => {}
        }
    }

    fn substitute(&self, params: &BTreeMap<String, f64>) -> Node {
        match self {
            Node::Param(name) => match params.get(name) {
                Some(v) if *v < 0.0 => Node::Neg(Box::new(Node::num(-v))),
                Some(v) => Node::num(*v),
                None => self.clone(),
            },
            Node::Neg(inner) => Node::Neg(Box::new(inner.substitute(params))),
            Node::Call(f, inner) => Node::Call(*f, Box::new(inner.substitute(params))),
            Node::Bin(op, a, b) => Node::Bin(
                *op,
                Box::new(a.substitute(params)),
                Box::new(b.substitute(params)),
            ),
            other => other.clone(),
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let paren = self.precedence() < min_prec;
        if paren {
            f.write_str("(")?;
        }
        match self {
            Node::Num { text, .. } => f.write_str(text)?,
            Node::Var => f.write_str("x")?,
            Node::Pi => f.write_str("pi")?,
            Node::Param(name) => f.write_str(name)?,
            Node::Neg(inner) => {
                f.write_str("-")?;
                inner.write(f, 3)?;
            }
            Node::Call(func, arg) => {
                write!(f, "{}(", func.name())?;
                arg.write(f, 0)?;
                f.write_str(")")?;
            }
            Node::Bin(op, a, b) => {
                let (lmin, rmin) = match op {
                    BinOp::Add | BinOp::Sub => (1, 2),
                    BinOp::Mul | BinOp::Div => (2, 3),
                    BinOp::Pow => (5, 3),
                };
                a.write(f, lmin)?;
                f.write_str(op.symbol())?;
                b.write(f, rmin)?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// A parsed arithmetic expression in one variable `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Expression {
    root: Node,
}

impl Expression {
    pub fn parse(src: &str) -> Result<Expression, ExprError> {
        let mut parser = Parser::new(src);
        let root = parser.expr()?;
        parser.skip_ws();
        if parser.pos < parser.src.len() {
            return Err(parser.error("unexpected trailing input"));
        }
        Ok(Expression { root })
    }

    pub fn from_node(root: Node) -> Expression {
        Expression { root }
    }

    pub fn variable() -> Expression {
        Expression { root: Node::Var }
    }

    /// `x^theta` with a literal exponent.
    pub fn power_of_x(theta: f64) -> Expression {
        if theta == 1.0 {
            return Self::variable();
        }
        Expression {
            root: Node::Bin(BinOp::Pow, Box::new(Node::Var), Box::new(Node::num(theta))),
        }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Names of parameters still free in the expression.
    pub fn parameters(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.root.collect_params(&mut out);
        out
    }

    pub fn is_bound(&self) -> bool {
        self.parameters().is_empty()
    }

    /// Substitute parameter values. Every free parameter must be supplied.
    pub fn bind(&self, params: &BTreeMap<String, f64>) -> Result<Expression, ExprError> {
        let bound = Expression {
            root: self.root.substitute(params),
        };
        let missing: Vec<String> = bound.parameters().into_iter().collect();
        if missing.is_empty() {
            Ok(bound)
        } else {
            Err(ExprError::Unbound(missing))
        }
    }

    pub fn eval<T: Scalar>(&self, x: &T, ctx: T::Ctx) -> Result<T, ExprError> {
        let v = self.root.eval(x, ctx)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite { x: x.to_f64() })
        }
    }

    /// Evaluation without the finiteness check on the result.
    pub(crate) fn eval_unchecked<T: Scalar>(&self, x: &T, ctx: T::Ctx) -> Result<T, ExprError> {
        self.root.eval(x, ctx)
    }

    pub fn eval_f64(&self, x: f64) -> Result<f64, ExprError> {
        self.eval(&x, ())
    }

    /// If the expression is `x` or `x^c` for a literal `c`, return the exponent.
    pub fn monomial_exponent(&self) -> Option<f64> {
        match &self.root {
            Node::Var => Some(1.0),
            Node::Bin(BinOp::Pow, base, exp) if **base == Node::Var => match exp.as_ref() {
                Node::Num { value, .. } => Some(*value),
                _ => None,
            },
            _ => None,
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.write(f, 0)
    }
}

impl std::str::FromStr for Expression {
    type Err = ExprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expression::parse(s)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn error(&self, message: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                if self.peek() == Some(b'(') {
                    let func = Func::from_name(name).ok_or_else(|| ExprError::UnknownFunction {
                        name: name.to_string(),
                        offset: start,
                    })?;
                    self.pos += 1;
                    let arg = self.expr()?;
                    if !self.eat(b')') {
                        return Err(self.error("expected `)` after function argument"));
                    }
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                Ok(match name {
                    "x" => Node::Var,
                    "pi" => Node::Pi,
                    _ => Node::Param(name.to_string()),
                })
            }
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut count = digits(self);
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            count += digits(self);
        }
        if count == 0 {
            return Err(self.error("malformed number"));
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
            offset: start,
            message: format!("malformed number `{text}`"),
        })?;
        Ok(Node::Num {
            text: text.to_string(),
            value,
        })
    }
}
