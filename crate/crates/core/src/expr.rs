//! Closed-form scalar fields over named coordinates.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Identifiers resolve against an explicit variable list, or `x1..xn` when
//! none is given. Functions: `sin cos exp ln sqrt pow(base, p) atan2(y, x)`.
//! The constant `pi` is predefined.

use crate::error::{Error, Result};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Sqrt => v.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    Atan2(Box<Expr>, Box<Expr>),
}

use Expr::*;

// Smart constructors fold constants and trivial identities so that repeated
// symbolic differentiation keeps trees small.

pub fn c(v: f64) -> Expr {
    Const(v)
}

pub fn var(i: usize) -> Expr {
    Var(i)
}

impl Expr {
    pub fn is_const(&self, v: f64) -> bool {
        matches!(self, Const(x) if *x == v)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Const(x), Const(y)) => Const(x + y),
            (Const(x), _) if *x == 0.0 => b,
            (_, Const(y)) if *y == 0.0 => a,
            _ => Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Const(x), Const(y)) => Const(x - y),
            (_, Const(y)) if *y == 0.0 => a,
            (Const(x), _) if *x == 0.0 => Expr::neg(b),
            _ => Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Const(x), Const(y)) => Const(x * y),
            (Const(x), _) | (_, Const(x)) if *x == 0.0 => Const(0.0),
            (Const(x), _) if *x == 1.0 => b,
            (_, Const(y)) if *y == 1.0 => a,
            _ => Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Const(x), Const(y)) if *y != 0.0 => Const(x / y),
            (Const(x), _) if *x == 0.0 => Const(0.0),
            (_, Const(y)) if *y == 1.0 => a,
            _ => Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Const(x) => Const(-x),
            Neg(inner) => *inner,
            other => Neg(Box::new(other)),
        }
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Const(x), Const(y)) => Const(x.powf(*y)),
            (_, Const(y)) if *y == 0.0 => Const(1.0),
            (_, Const(y)) if *y == 1.0 => a,
            _ => Pow(Box::new(a), Box::new(b)),
        }
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        match a {
            Const(x) => Const(f.apply(x)),
            other => Call(f, Box::new(other)),
        }
    }

    pub fn parse(src: &str) -> Result<Expr> {
        Parser::new(src, &[]).parse_all()
    }

    /// Parse with identifiers resolved against `vars` (index = position).
    pub fn parse_with(src: &str, vars: &[&str]) -> Result<Expr> {
        Parser::new(src, vars).parse_all()
    }

    /// Number of coordinates the expression refers to (highest index + 1).
    pub fn arity(&self) -> usize {
        match self {
            Const(_) => 0,
            Var(i) => i + 1,
            Neg(a) | Call(_, a) => a.arity(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) | Atan2(a, b) => {
                a.arity().max(b.arity())
            }
        }
    }

    pub fn depends_on(&self, v: usize) -> bool {
        match self {
            Const(_) => false,
            Var(i) => *i == v,
            Neg(a) | Call(_, a) => a.depends_on(v),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) | Atan2(a, b) => {
                a.depends_on(v) || b.depends_on(v)
            }
        }
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            Const(x) => *x,
            Var(i) => p[*i],
            Neg(a) => -a.eval(p),
            Add(a, b) => a.eval(p) + b.eval(p),
            Sub(a, b) => a.eval(p) - b.eval(p),
            Mul(a, b) => a.eval(p) * b.eval(p),
            Div(a, b) => a.eval(p) / b.eval(p),
            Pow(a, b) => {
                let base = a.eval(p);
                match **b {
                    Const(e) if e == e.trunc() && e.abs() < 64.0 => base.powi(e as i32),
                    _ => base.powf(b.eval(p)),
                }
            }
            Call(f, a) => f.apply(a.eval(p)),
            Atan2(y, x) => y.eval(p).atan2(x.eval(p)),
        }
    }

    /// Symbolic partial derivative with respect to coordinate `v`.
    pub fn derivative(&self, v: usize) -> Expr {
        if !self.depends_on(v) {
            return Const(0.0);
        }
        match self {
            Const(_) => Const(0.0),
            Var(i) => Const(if *i == v { 1.0 } else { 0.0 }),
            Neg(a) => Expr::neg(a.derivative(v)),
            Add(a, b) => Expr::add(a.derivative(v), b.derivative(v)),
            Sub(a, b) => Expr::sub(a.derivative(v), b.derivative(v)),
            Mul(a, b) => Expr::add(
                Expr::mul(a.derivative(v), (**b).clone()),
                Expr::mul((**a).clone(), b.derivative(v)),
            ),
            Div(a, b) => Expr::div(
                Expr::sub(
                    Expr::mul(a.derivative(v), (**b).clone()),
                    Expr::mul((**a).clone(), b.derivative(v)),
                ),
                Expr::pow((**b).clone(), Const(2.0)),
            ),
            Pow(a, b) => {
                if !b.depends_on(v) {
                    // d(a^e) = e a^(e-1) a'
                    let e = (**b).clone();
                    let em1 = Expr::sub(e.clone(), Const(1.0));
                    Expr::mul(
                        Expr::mul(e, Expr::pow((**a).clone(), em1)),
                        a.derivative(v),
                    )
                } else {
                    // d(a^b) = a^b (b' ln a + b a'/a)
                    Expr::mul(
                        self.clone(),
                        Expr::add(
                            Expr::mul(b.derivative(v), Expr::call(Func::Ln, (**a).clone())),
                            Expr::div(Expr::mul((**b).clone(), a.derivative(v)), (**a).clone()),
                        ),
                    )
                }
            }
            Call(f, a) => {
                let inner = (**a).clone();
                let da = a.derivative(v);
                let outer = match f {
                    Func::Sin => Expr::call(Func::Cos, inner),
                    Func::Cos => Expr::neg(Expr::call(Func::Sin, inner)),
                    Func::Exp => Expr::call(Func::Exp, inner),
                    Func::Ln => Expr::div(Const(1.0), inner),
                    Func::Sqrt => Expr::div(Const(0.5), Expr::call(Func::Sqrt, inner)),
                };
                Expr::mul(outer, da)
            }
            Atan2(y, x) => {
                let (yy, xx) = ((**y).clone(), (**x).clone());
                let num = Expr::sub(
                    Expr::mul(xx.clone(), y.derivative(v)),
                    Expr::mul(yy.clone(), x.derivative(v)),
                );
                let den = Expr::add(
                    Expr::pow(xx, Const(2.0)),
                    Expr::pow(yy, Const(2.0)),
                );
                Expr::div(num, den)
            }
        }
    }

    pub fn nth_derivative(&self, v: usize, order: u32) -> Expr {
        (0..order).fold(self.clone(), |e, _| e.derivative(v))
    }

    /// Degree in coordinate `v` when the expression is a polynomial in it.
    pub fn polynomial_degree(&self, v: usize) -> Option<u32> {
        if !self.depends_on(v) {
            return Some(0);
        }
        match self {
            Const(_) => Some(0),
            Var(i) => Some(u32::from(*i == v)),
            Neg(a) => a.polynomial_degree(v),
            Add(a, b) | Sub(a, b) => Some(a.polynomial_degree(v)?.max(b.polynomial_degree(v)?)),
            Mul(a, b) => Some(a.polynomial_degree(v)? + b.polynomial_degree(v)?),
            Div(a, b) if !b.depends_on(v) => a.polynomial_degree(v),
            Pow(a, b) => match **b {
                Const(e) if e >= 0.0 && e == e.trunc() => {
                    Some(a.polynomial_degree(v)? * e as u32)
                }
                _ => None,
            },
            _ => None,
        }
    }

    /// Recognize `k * (x_v - s)^p` (with `x_v` itself and constants as special
    /// cases). Returns `(k, s, p)`.
    pub fn as_power(&self, v: usize) -> Option<(f64, f64, f64)> {
        fn base(e: &Expr, v: usize) -> Option<f64> {
            match e {
                Var(i) if *i == v => Some(0.0),
                Sub(a, b) => match (&**a, &**b) {
                    (Var(i), Const(s)) if *i == v => Some(*s),
                    _ => None,
                },
                Add(a, b) => match (&**a, &**b) {
                    (Var(i), Const(s)) | (Const(s), Var(i)) if *i == v => Some(-*s),
                    _ => None,
                },
                _ => None,
            }
        }
        match self {
            Const(k) => Some((*k, 0.0, 0.0)),
            Pow(a, b) => match **b {
                Const(p) => base(a, v).map(|s| (1.0, s, p)),
                _ => None,
            },
            Mul(a, b) => match (&**a, &**b) {
                (Const(k), other) | (other, Const(k)) => {
                    other.as_power(v).map(|(k2, s, p)| (k * k2, s, p))
                }
                _ => None,
            },
            Neg(a) => a.as_power(v).map(|(k, s, p)| (-k, s, p)),
            other => base(other, v).map(|s| (1.0, s, 1.0)),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const(x) => {
                if *x < 0.0 {
                    write!(f, "({x})")
                } else {
                    write!(f, "{x}")
                }
            }
            Var(i) => write!(f, "x{}", i + 1),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, b) => write!(f, "({a}^{b})"),
            Call(func, a) => write!(f, "{}({a})", func.name()),
            Atan2(y, x) => write!(f, "atan2({y}, {x})"),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    vars: &'a [&'a str],
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, vars: &'a [&'a str]) -> Self {
        Parser {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            vars,
        }
    }

    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, ch: u8) -> Result<()> {
        match self.peek() {
            Some(b) if b == ch => {
                self.pos += 1;
                Ok(())
            }
            Some(b) => self.err(self.pos, format!("expected '{}', found '{}'", ch as char, b as char)),
            None => self.err(self.pos, format!("expected '{}', found end of input", ch as char)),
        }
    }

    fn parse_all(mut self) -> Result<Expr> {
        let e = self.expr()?;
        if let Some(b) = self.peek() {
            return self.err(self.pos, format!("unexpected '{}'", b as char));
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(match inner {
                Const(x) => Const(-x),
                other => Neg(Box::new(other)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let start = match self.peek() {
            Some(_) => self.pos,
            None => return self.err(self.pos, "unexpected end of input"),
        };
        let b = self.bytes[start];
        if b == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            self.expect(b')')?;
            return Ok(e);
        }
        if b.is_ascii_digit() || b == b'.' {
            return self.number();
        }
        if b.is_ascii_alphabetic() || b == b'_' {
            while self.pos < self.bytes.len()
                && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
            {
                self.pos += 1;
            }
            let name = &self.src[start..self.pos];
            if self.peek() == Some(b'(') {
                self.pos += 1;
                let mut args = vec![self.expr()?];
                while self.peek() == Some(b',') {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
                self.expect(b')')?;
                return self.call(name, args, start);
            }
            return self.ident(name, start);
        }
        self.err(start, format!("unexpected '{}'", b as char))
    }

    fn call(&self, name: &str, mut args: Vec<Expr>, at: usize) -> Result<Expr> {
        let unary = |f: Func, mut args: Vec<Expr>| -> Result<Expr> {
            if args.len() != 1 {
                return self.err(at, format!("{name} takes one argument"));
            }
            Ok(Call(f, Box::new(args.pop().unwrap())))
        };
        match name {
            "sin" => unary(Func::Sin, args),
            "cos" => unary(Func::Cos, args),
            "exp" => unary(Func::Exp, args),
            "ln" => unary(Func::Ln, args),
            "sqrt" => unary(Func::Sqrt, args),
            "pow" | "atan2" => {
                if args.len() != 2 {
                    return self.err(at, format!("{name} takes two arguments"));
                }
                let b = args.pop().unwrap();
                let a = args.pop().unwrap();
                Ok(if name == "pow" {
                    Pow(Box::new(a), Box::new(b))
                } else {
                    Atan2(Box::new(a), Box::new(b))
                })
            }
            _ => self.err(at, format!("unknown function '{name}'")),
        }
    }

    fn ident(&self, name: &str, at: usize) -> Result<Expr> {
        if let Some(i) = self.vars.iter().position(|v| *v == name) {
            return Ok(Var(i));
        }
        if name == "pi" {
            return Ok(Const(std::f64::consts::PI));
        }
        if self.vars.is_empty() {
            if let Some(k) = name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                if k >= 1 {
                    return Ok(Var(k - 1));
                }
            }
        }
        self.err(at, format!("unknown identifier '{name}'"))
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let bytes = self.bytes;
        while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < bytes.len() && (bytes[self.pos] == b'+' || bytes[self.pos] == b'-') {
                self.pos += 1;
            }
            if self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        match self.src[start..self.pos].parse::<f64>() {
            Ok(v) => Ok(Const(v)),
            Err(_) => self.err(start, format!("malformed number '{}'", &self.src[start..self.pos])),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_evaluates() {
        let e = Expr::parse("x1^2 + 3*sin(x2) - pow(x1, 0.5)/2").unwrap();
        let v = e.eval(&[4.0, 0.0]);
        assert!((v - (16.0 - 1.0)).abs() < 1e-14);
        assert_eq!(e.arity(), 2);
    }

    #[test]
    fn precedence_and_unary_minus() {
        assert_eq!(Expr::parse("-2^2").unwrap().eval(&[]), -4.0);
        assert_eq!(Expr::parse("2^-1").unwrap().eval(&[]), 0.5);
        assert_eq!(Expr::parse("2^3^2").unwrap().eval(&[]), 512.0);
        assert_eq!(Expr::parse("8/2/2").unwrap().eval(&[]), 2.0);
        assert_eq!(Expr::parse("1e-3 * 2E2").unwrap().eval(&[]), 0.2);
    }

    #[test]
    fn named_variables() {
        let e = Expr::parse_with("r*cos(theta)", &["r", "theta"]).unwrap();
        assert!((e.eval(&[2.0, 0.0]) - 2.0).abs() < 1e-15);
        assert!(Expr::parse_with("x1", &["r"]).is_err());
    }

    #[test]
    fn parse_errors_report_offset() {
        match Expr::parse("x1 + * 2") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        match Expr::parse("sin(x1") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("{other:?}"),
        }
        match Expr::parse("foo(1)") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn symbolic_derivatives() {
        let e = Expr::parse("x1^3 * exp(x2) + ln(x1) + atan2(x2, x1)").unwrap();
        let d = e.derivative(0);
        let p = [1.3, 0.4];
        let expect = 3.0 * 1.3f64.powi(2) * 0.4f64.exp() + 1.0 / 1.3 - 0.4 / (1.3 * 1.3 + 0.16);
        assert!((d.eval(&p) - expect).abs() < 1e-12);
        let d4 = Expr::parse("sin(x1)").unwrap().nth_derivative(0, 4);
        assert!((d4.eval(&[0.7]) - 0.7f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn polynomial_detection() {
        assert_eq!(Expr::parse("x1^2*x2 + 3").unwrap().polynomial_degree(0), Some(2));
        assert_eq!(Expr::parse("(x1+1)^3/4").unwrap().polynomial_degree(0), Some(3));
        assert_eq!(Expr::parse("sin(x1)").unwrap().polynomial_degree(0), None);
        assert_eq!(Expr::parse("sin(x2)").unwrap().polynomial_degree(0), Some(0));
    }

    #[test]
    fn power_form_detection() {
        assert_eq!(Expr::parse("x1").unwrap().as_power(0), Some((1.0, 0.0, 1.0)));
        assert_eq!(Expr::parse("2*(x1-1)^0.5").unwrap().as_power(0), Some((2.0, 1.0, 0.5)));
        assert_eq!(Expr::parse("x1^2").unwrap().as_power(0), Some((1.0, 0.0, 2.0)));
        assert_eq!(Expr::parse("x1^2 + 1").unwrap().as_power(0), None);
    }
}
