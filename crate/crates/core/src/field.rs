//! Point-evaluable scalar fields.
//!
//! A [`Field`] is anything that can be evaluated at a point of R^n: a parsed
//! [`Expr`], a closure, or a lazily evaluated differintegral of another
//! field. Nested operators (exterior differintegrals applied twice, matrix
//! compositions) are built by stacking fields.

use crate::error::Result;
use crate::expr::Expr;
use std::fmt;
use std::sync::Arc;

pub trait Field: Send + Sync {
    fn eval(&self, p: &[f64]) -> Result<f64>;

    /// The closed form, when the field has one.
    fn as_expr(&self) -> Option<&Expr> {
        None
    }
}

pub type FieldRef = Arc<dyn Field>;

impl Field for Expr {
    fn eval(&self, p: &[f64]) -> Result<f64> {
        Ok(Expr::eval(self, p))
    }

    fn as_expr(&self) -> Option<&Expr> {
        Some(self)
    }
}

impl fmt::Debug for dyn Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_expr() {
            Some(e) => write!(f, "Field({e})"),
            None => write!(f, "Field(<lazy>)"),
        }
    }
}

pub fn expr(e: Expr) -> FieldRef {
    Arc::new(e)
}

pub fn constant(v: f64) -> FieldRef {
    Arc::new(Expr::Const(v))
}

/// Wraps a closure as a field.
pub struct FnField<F>(pub F);

impl<F> Field for FnField<F>
where
    F: Fn(&[f64]) -> Result<f64> + Send + Sync,
{
    fn eval(&self, p: &[f64]) -> Result<f64> {
        (self.0)(p)
    }
}

pub fn from_fn<F>(f: F) -> FieldRef
where
    F: Fn(&[f64]) -> Result<f64> + Send + Sync + 'static,
{
    Arc::new(FnField(f))
}

struct Sum(Vec<FieldRef>);

impl Field for Sum {
    fn eval(&self, p: &[f64]) -> Result<f64> {
        self.0.iter().try_fold(0.0, |acc, f| Ok(acc + f.eval(p)?))
    }
}

struct Product(FieldRef, FieldRef);

impl Field for Product {
    fn eval(&self, p: &[f64]) -> Result<f64> {
        Ok(self.0.eval(p)? * self.1.eval(p)?)
    }
}

struct Scaled(f64, FieldRef);

impl Field for Scaled {
    fn eval(&self, p: &[f64]) -> Result<f64> {
        Ok(self.0 * self.1.eval(p)?)
    }
}

fn const_value(f: &FieldRef) -> Option<f64> {
    match f.as_expr() {
        Some(Expr::Const(v)) => Some(*v),
        _ => None,
    }
}

/// Sum of fields; closed forms stay closed.
pub fn sum(a: &FieldRef, b: &FieldRef) -> FieldRef {
    match (a.as_expr(), b.as_expr()) {
        (Some(x), Some(y)) => expr(Expr::add(x.clone(), y.clone())),
        _ if const_value(a) == Some(0.0) => b.clone(),
        _ if const_value(b) == Some(0.0) => a.clone(),
        _ => Arc::new(Sum(vec![a.clone(), b.clone()])),
    }
}

pub fn product(a: &FieldRef, b: &FieldRef) -> FieldRef {
    match (a.as_expr(), b.as_expr()) {
        (Some(x), Some(y)) => expr(Expr::mul(x.clone(), y.clone())),
        _ => match (const_value(a), const_value(b)) {
            (Some(k), _) => scale(b, k),
            (_, Some(k)) => scale(a, k),
            _ => Arc::new(Product(a.clone(), b.clone())),
        },
    }
}

pub fn scale(a: &FieldRef, k: f64) -> FieldRef {
    if k == 1.0 {
        return a.clone();
    }
    match a.as_expr() {
        Some(e) => expr(Expr::mul(Expr::Const(k), e.clone())),
        None => Arc::new(Scaled(k, a.clone())),
    }
}

pub fn is_zero(a: &FieldRef) -> bool {
    const_value(a) == Some(0.0)
}
