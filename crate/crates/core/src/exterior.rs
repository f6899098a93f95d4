//! The fractional exterior differintegral `d^nu = sum_j dx_j^nu D^nu_{x_j}`
//! and numerical Poincare residuals.

use crate::differint::{lazy_differint, DifferintSpec};
use crate::error::{Error, Result};
use crate::field::{self, FieldRef};
use crate::forms::{FracForm, OrderSignature};
use crate::matrix::MatrixOrder;
use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq)]
pub struct ExteriorSpec {
    pub order: f64,
    /// lower limit per coordinate
    pub lower: Vec<f64>,
    pub tolerance: f64,
    pub grid_size: usize,
}

impl ExteriorSpec {
    pub fn new(order: f64, lower: Vec<f64>) -> Self {
        ExteriorSpec {
            order,
            lower,
            tolerance: 1e-6,
            grid_size: 32,
        }
    }

    pub fn with_order(&self, order: f64) -> Self {
        ExteriorSpec {
            order,
            ..self.clone()
        }
    }

    pub fn scalar(&self, var: usize) -> DifferintSpec {
        DifferintSpec::new(var, self.order, self.lower[var])
            .with_tolerance(self.tolerance)
            .with_grid_size(self.grid_size)
    }
}

/// A 0-form.
pub fn zero_form(f: FieldRef, n: usize) -> Result<FracForm<FieldRef>> {
    let sig = OrderSignature::new(&[], n)?;
    FracForm::basis(sig, &[], f)
}

/// `d^nu alpha`. Each coefficient of the result is a lazily evaluated sum of
/// differintegrals of the coefficients of `alpha`.
pub fn exterior_differint(alpha: &FracForm<FieldRef>, spec: &ExteriorSpec) -> Result<FracForm<FieldRef>> {
    let n = alpha.signature().n;
    if spec.lower.len() != n {
        return Err(Error::AmbientMismatch(spec.lower.len(), n));
    }
    let dx_sig = OrderSignature::new(&[(spec.order, 1)], n)?;
    // signature of dx^nu ^ alpha, fixed by the signatures alone
    let shape = FracForm::basis(dx_sig.clone(), &[0], 1.0)?.wedge(&FracForm::<f64>::zero(alpha.signature().clone()))?;
    let mut out = FracForm::zero(shape.signature().clone());
    for (key, coef) in alpha.terms() {
        let unit = FracForm::basis(alpha.signature().clone(), key, 1.0)?;
        for j in 0..n {
            let placed = FracForm::basis(dx_sig.clone(), &[j], 1.0)?.wedge(&unit)?;
            let Some((k, sign)) = placed.terms().next().map(|(k, s)| (k.clone(), *s)) else {
                continue;
            };
            let d = lazy_differint(coef, spec.scalar(j));
            out.add_term(&k, field::scale(&d, sign))?;
        }
    }
    Ok(out)
}

/// Largest component of `d^nu d^nu alpha` over the points. The inner
/// application runs at half the tolerance of the outer one.
pub fn poincare_residual(alpha: &FracForm<FieldRef>, spec: &ExteriorSpec, points: &[Vec<f64>], exec: Execution) -> Result<f64> {
    let mut inner_spec = spec.clone();
    inner_spec.tolerance = spec.tolerance / 2.0;
    let once = exterior_differint(alpha, &inner_spec)?;
    let twice = exterior_differint(&once, spec)?;
    let comps: Vec<(usize, &FieldRef)> = twice.terms().enumerate().map(|(i, (_, c))| (i, c)).collect();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..comps.len()).map(move |c| (p, c)))
        .collect();
    let values = par::try_map(exec, &jobs, |&(p, c)| comps[c].1.eval(&points[p]).map(f64::abs))?;
    Ok(values.into_iter().fold(0.0, f64::max))
}

/// Poincare residual for each eigenvalue of a diagonalizable order matrix.
/// Returns `(eigenvalue, residual)` pairs.
pub fn matrix_exterior_residual(
    alpha: &FracForm<FieldRef>,
    a: &MatrixOrder,
    spec: &ExteriorSpec,
    points: &[Vec<f64>],
    exec: Execution,
) -> Result<Vec<(f64, f64)>> {
    if !a.is_diagonalizable() {
        return Err(Error::NonDiagonalizableOrder);
    }
    let mut out = Vec::new();
    for &(lam, _) in a.eigenvalues() {
        if lam.im != 0.0 {
            return Err(Error::UnsupportedOrder(format!("complex eigenvalue {lam}")));
        }
        let r = poincare_residual(alpha, &spec.with_order(lam.re), points, exec)?;
        out.push((lam.re, r));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    fn f(s: &str) -> FieldRef {
        field::expr(Expr::parse(s).unwrap())
    }

    #[test]
    fn classical_differential() {
        let a = zero_form(f("x1"), 2).unwrap();
        let d = exterior_differint(&a, &ExteriorSpec::new(1.0, vec![0.0, 0.0])).unwrap();
        let at = d.at(&[0.7, 1.3]).unwrap();
        assert_eq!(at.get(&[0]), Some(&1.0));
        assert!(at.get(&[1]).is_none_or(|v| *v == 0.0));
    }

    #[test]
    fn half_order_of_coordinate() {
        let a = zero_form(f("x1"), 2).unwrap();
        let d = exterior_differint(&a, &ExteriorSpec::new(0.5, vec![0.0, 0.0])).unwrap();
        let at = d.at(&[1.0, 1.0]).unwrap();
        assert!((at.get(&[0]).unwrap() - std::f64::consts::FRAC_2_SQRT_PI).abs() < 1e-7);
        assert!((at.get(&[1]).unwrap() - 0.564_189_584).abs() < 1e-7);
    }

    #[test]
    fn constant_one_form() {
        let sig = OrderSignature::new(&[(0.3, 1)], 2).unwrap();
        let a = FracForm::basis(sig, &[0], field::constant(2.0)).unwrap();
        let d = exterior_differint(&a, &ExteriorSpec::new(-0.5, vec![0.0, 0.0])).unwrap();
        let at = d.at(&[1.0, 4.0]).unwrap();
        // dx_2^{-1/2} ^ dx_1^{0.3}, with the new block first
        let g = crate::special::gamma(1.5);
        assert!((at.get(&[1, 0]).unwrap() - 2.0 * 2.0 / g).abs() < 1e-8, "{at:?}");
        assert!(at.get(&[0, 0]).is_none_or(|v| (v - 2.0 / g).abs() < 1e-8));
    }

    #[test]
    fn classical_poincare_is_exact() {
        let a = zero_form(f("x1^2*x2 + sin(x1)*x2"), 2).unwrap();
        let pts = vec![vec![0.7, 1.2], vec![1.5, 0.9]];
        let r = poincare_residual(&a, &ExteriorSpec::new(1.0, vec![0.0, 0.0]), &pts, Execution::Sequential).unwrap();
        assert!(r <= 1e-9, "{r}");
    }

    #[test]
    fn jordan_order_rejected() {
        let a = zero_form(f("x1*x2"), 2).unwrap();
        let j = MatrixOrder::from_real(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let r = matrix_exterior_residual(&a, &j, &ExteriorSpec::new(0.0, vec![0.0, 0.0]), &[vec![1.0, 1.0]], Execution::Sequential);
        assert!(matches!(r, Err(Error::NonDiagonalizableOrder)));
    }
}
