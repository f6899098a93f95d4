//! The covariant fractional derivative of a vector field in a curvilinear
//! chart, its connection functional, and the matrix-order extension.
//!
//! Components `V_a(y)` transform with the reverse matrix,
//! `V_k(x) = sum_a J_k^a(y, x) V_a(y)`, and
//!
//! ```text
//! nabla_b V_l = sum_{k,a} J_l^k(x, y) D^nu_{y_b}( J_k^a(y, x) V_a(y) )
//! ```
//!
//! where the differintegral acts on the product as a field of `y_b`.

use crate::coords::{jacobian_tol, CoordMap, Matrix, TransformMatrix};
use crate::differint::{differint, ridders, DifferintSpec, Scheme};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{self, FieldRef};
use crate::matrix::{matrix_binomial, matrix_differint, CMat, MatrixOrder};
use crate::special::binomial;
use dashmap::DashMap;
use num_complex::Complex64;
use serde::Serialize;
use std::sync::Arc;

/// Highest derivative order of the transformation matrix used by the
/// connection series.
pub const MAX_SERIES_ORDER: u32 = 10;

/// Components of a vector field in a chart.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub components: Vec<FieldRef>,
}

impl VectorField {
    pub fn new(components: Vec<FieldRef>) -> Self {
        VectorField { components }
    }

    pub fn parse(srcs: &[&str]) -> Result<Self> {
        let components = srcs
            .iter()
            .map(|s| Expr::parse(s).map(field::expr))
            .collect::<Result<Vec<_>>>()?;
        Ok(VectorField { components })
    }

    pub fn zero(n: usize) -> Self {
        VectorField {
            components: (0..n).map(|_| field::constant(0.0)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariantSpec {
    pub order: f64,
    /// tolerance of the outer differintegral and of the connection series
    pub tolerance: f64,
    /// tolerance of the differintegrals inside each transformation matrix
    pub jacobian_tolerance: f64,
}

impl CovariantSpec {
    pub fn new(order: f64) -> Self {
        CovariantSpec {
            order,
            tolerance: 1e-6,
            jacobian_tolerance: 1e-12,
        }
    }

    pub fn with_order(self, order: f64) -> Self {
        CovariantSpec { order, ..self }
    }

    pub fn with_tolerance(self, tolerance: f64) -> Self {
        CovariantSpec { tolerance, ..self }
    }

    fn validate(&self) -> Result<()> {
        if !(self.order >= 0.0) || !self.order.is_finite() {
            return Err(Error::UnsupportedOrder(format!(
                "covariant derivative needs order >= 0, got {}",
                self.order
            )));
        }
        Ok(())
    }
}

/// Memoized transformation matrices of one chart at one order.
struct JacobianCache {
    map: CoordMap,
    order: f64,
    tol: f64,
    memo: DashMap<Vec<u64>, Arc<TransformMatrix>>,
}

impl JacobianCache {
    fn new(map: &CoordMap, order: f64, tol: f64) -> Arc<Self> {
        Arc::new(JacobianCache {
            map: map.clone(),
            order,
            tol,
            memo: DashMap::new(),
        })
    }

    fn at(&self, y: &[f64]) -> Result<Arc<TransformMatrix>> {
        let key: Vec<u64> = y.iter().map(|v| v.to_bits()).collect();
        if let Some(t) = self.memo.get(&key) {
            return Ok(t.clone());
        }
        let t = Arc::new(jacobian_tol(&self.map, self.order, y, self.tol)?);
        self.memo.insert(key, t.clone());
        Ok(t)
    }
}

fn check_dims(v: &VectorField, map: &CoordMap, y: &[f64]) -> Result<()> {
    let n = map.dim();
    if v.dim() != n {
        return Err(Error::AmbientMismatch(v.dim(), n));
    }
    if y.len() != n {
        return Err(Error::AmbientMismatch(y.len(), n));
    }
    Ok(())
}

/// `V_k(x(y)) = sum_a J_k^a(y, x) V_a(y)` as a field of `y`.
fn cartesian_component(v: &VectorField, cache: &Arc<JacobianCache>, k: usize) -> FieldRef {
    let comps = v.components.clone();
    let cache = cache.clone();
    field::from_fn(move |p| {
        let t = cache.at(p)?;
        let mut acc = 0.0;
        for (a, va) in comps.iter().enumerate() {
            let w = t.reverse[a][k];
            if w != 0.0 {
                acc += w * va.eval(p)?;
            }
        }
        Ok(acc)
    })
}

fn outer_spec(map: &CoordMap, spec: &CovariantSpec, b: usize, order: f64) -> DifferintSpec {
    DifferintSpec::new(b, order, map.lower_y[b])
        .with_tolerance(spec.tolerance)
        .with_scheme(Scheme::Quadrature)
}

fn direct_with(v: &VectorField, map: &CoordMap, spec: &CovariantSpec, b: usize, y: &[f64], cache: &Arc<JacobianCache>) -> Result<Vec<f64>> {
    let n = map.dim();
    let t = cache.at(y)?;
    let mut d = vec![0.0; n];
    for (k, dk) in d.iter_mut().enumerate() {
        let f = cartesian_component(v, cache, k);
        *dk = differint(f.as_ref(), &outer_spec(map, spec, b, spec.order), y)?.value;
    }
    Ok((0..n)
        .map(|l| (0..n).map(|k| t.forward[k][l] * d[k]).sum())
        .collect())
}

/// `nabla_b V_l` for every `l`.
pub fn covariant_direct(v: &VectorField, map: &CoordMap, spec: &CovariantSpec, b: usize, y: &[f64]) -> Result<Vec<f64>> {
    spec.validate()?;
    check_dims(v, map, y)?;
    if b >= map.dim() {
        return Err(Error::Invalid(format!("direction {b} out of range")));
    }
    let cache = JacobianCache::new(map, spec.order, spec.jacobian_tolerance);
    direct_with(v, map, spec, b, y, &cache)
}

/// `D^nu_{y_b} V_l` for every `l`, the connection-free part.
pub fn plain_differint(v: &VectorField, map: &CoordMap, spec: &CovariantSpec, b: usize, y: &[f64]) -> Result<Vec<f64>> {
    spec.validate()?;
    check_dims(v, map, y)?;
    v.components
        .iter()
        .map(|c| Ok(differint(c.as_ref(), &outer_spec(map, spec, b, spec.order), y)?.value))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ConnectionValue {
    /// gamma_{lb} for every `l`
    pub value: Vec<f64>,
    pub terms: u32,
    /// largest component of the last term added
    pub tail: f64,
}

/// Step for a centered stencil of order `s` that stays above the lower
/// limit in direction `b`.
fn stencil_step(y: f64, lower: f64, s: u32) -> f64 {
    let room = y - lower;
    let half = s as f64 / 2.0;
    (0.1 * y.abs().max(1.0)).min(0.8 * room / half)
}

/// `d^s/dy_b^s J_k^a(y, x)` for all `a, k`.
fn reverse_derivative(cache: &Arc<JacobianCache>, y: &[f64], b: usize, s: u32) -> Result<Matrix> {
    let n = y.len();
    let h0 = stencil_step(y[b], cache.map.lower_y[b], s);
    let mut out = vec![vec![0.0; n]; n];
    for (a, row) in out.iter_mut().enumerate() {
        for (k, cell) in row.iter_mut().enumerate() {
            let g = |t: f64| {
                let mut p = y.to_vec();
                p[b] = t;
                Ok(cache.at(&p)?.reverse[a][k])
            };
            *cell = ridders(g, y[b], s, h0, 1e-10)?.0;
        }
    }
    Ok(out)
}

/// The connection functional
/// `gamma_{lb} = sum_{k,a} J_l^k sum_{s>=1} C(nu, s) D^{nu-s}_{y_b} V_a d^s_{y_b} J_k^a(y, x)`.
///
/// Terms are added until one falls below `tolerance * max(1, |sum|)`.
/// Derivatives of the transformation matrix come from Ridders-extrapolated
/// central differences, up to order `MAX_SERIES_ORDER`.
pub fn connection_functional(v: &VectorField, map: &CoordMap, spec: &CovariantSpec, b: usize, y: &[f64]) -> Result<ConnectionValue> {
    spec.validate()?;
    check_dims(v, map, y)?;
    let cache = JacobianCache::new(map, spec.order, spec.jacobian_tolerance);
    connection_with(v, map, spec, b, y, &cache)
}

fn connection_with(v: &VectorField, map: &CoordMap, spec: &CovariantSpec, b: usize, y: &[f64], cache: &Arc<JacobianCache>) -> Result<ConnectionValue> {
    let n = map.dim();
    let t = cache.at(y)?;
    let nu = spec.order;
    let mut sum = vec![0.0; n];
    let mut tail = f64::INFINITY;
    for s in 1..=MAX_SERIES_ORDER {
        let c = binomial(nu, s);
        let mut term = vec![0.0; n];
        if c != 0.0 {
            let dv: Vec<f64> = v
                .components
                .iter()
                .map(|va| Ok(differint(va.as_ref(), &outer_spec(map, spec, b, nu - s as f64), y)?.value))
                .collect::<Result<_>>()?;
            let dw = match reverse_derivative(cache, y, b, s) {
                Ok(d) => d,
                // high-order differences lost to rounding: the series has not settled
                Err(Error::StepUnderflow { .. }) if s > 3 => {
                    return Err(Error::SeriesNoConverge { terms: s as usize - 1, tail });
                }
                Err(e) => return Err(e),
            };
            for (l, tl) in term.iter_mut().enumerate() {
                for k in 0..n {
                    for a in 0..n {
                        *tl += t.forward[k][l] * c * dv[a] * dw[a][k];
                    }
                }
            }
        }
        for (acc, tl) in sum.iter_mut().zip(&term) {
            *acc += tl;
        }
        tail = term.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        let size = sum.iter().fold(1.0, |m: f64, v| m.max(v.abs()));
        if tail <= spec.tolerance * size {
            return Ok(ConnectionValue {
                value: sum,
                terms: s,
                tail,
            });
        }
    }
    Err(Error::SeriesNoConverge {
        terms: MAX_SERIES_ORDER as usize,
        tail,
    })
}

/// Direct value, plain differintegral and connection at one point.
#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    pub direct: Vec<f64>,
    pub plain: Vec<f64>,
    pub connection: ConnectionValue,
    /// largest `|direct - plain - connection|`
    pub residual: f64,
}

pub fn decomposition(v: &VectorField, map: &CoordMap, spec: &CovariantSpec, b: usize, y: &[f64]) -> Result<Decomposition> {
    spec.validate()?;
    check_dims(v, map, y)?;
    let cache = JacobianCache::new(map, spec.order, spec.jacobian_tolerance);
    let direct = direct_with(v, map, spec, b, y, &cache)?;
    let plain = plain_differint(v, map, spec, b, y)?;
    let connection = connection_with(v, map, spec, b, y, &cache)?;
    let residual = (0..map.dim())
        .map(|l| (direct[l] - plain[l] - connection.value[l]).abs())
        .fold(0.0, f64::max);
    Ok(Decomposition {
        direct,
        plain,
        connection,
        residual,
    })
}

/// Both sides of the transformation law
/// `sum_{i,m} J_j^i(y, x) J_k^m(y, x) nabla_i V_m = D^nu_{x_j} V_k(x)`.
#[derive(Debug, Clone, Serialize)]
pub struct TransformCheck {
    pub lhs: Matrix,
    pub rhs: Matrix,
    pub max_difference: f64,
}

/// `v_cartesian` holds Cartesian components as fields of `x`; they are
/// pulled back to the chart as `V_a(y) = sum_k J_a^k(x, y) V_k(x(y))`.
pub fn vector_transform_check(v_cartesian: &VectorField, map: &CoordMap, spec: &CovariantSpec, y: &[f64]) -> Result<TransformCheck> {
    spec.validate()?;
    check_dims(v_cartesian, map, y)?;
    let n = map.dim();
    let cache = JacobianCache::new(map, spec.order, spec.jacobian_tolerance);
    let pulled: Vec<FieldRef> = (0..n)
        .map(|a| {
            let cache = cache.clone();
            let comps = v_cartesian.components.clone();
            let forward = map.forward.clone();
            field::from_fn(move |p| {
                let t = cache.at(p)?;
                let x: Vec<f64> = forward.iter().map(|e| e.eval(p)).collect();
                let mut acc = 0.0;
                for (k, vk) in comps.iter().enumerate() {
                    acc += t.forward[k][a] * vk.eval(&x)?;
                }
                Ok(acc)
            })
        })
        .collect();
    let pulled = VectorField::new(pulled);
    let mut nabla = vec![vec![0.0; n]; n];
    for (i, row) in nabla.iter_mut().enumerate() {
        *row = direct_with(&pulled, map, spec, i, y, &cache)?;
    }
    let w = cache.at(y)?.reverse.clone();
    let x = map.to_cartesian(y);
    let mut lhs = vec![vec![0.0; n]; n];
    let mut rhs = vec![vec![0.0; n]; n];
    let mut max_difference: f64 = 0.0;
    for j in 0..n {
        for k in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                for m in 0..n {
                    acc += w[i][j] * w[m][k] * nabla[i][m];
                }
            }
            lhs[j][k] = acc;
            let sp = DifferintSpec::new(j, spec.order, map.lower_x[j])
                .with_tolerance(spec.tolerance)
                .with_scheme(Scheme::Quadrature);
            rhs[j][k] = differint(v_cartesian.components[k].as_ref(), &sp, &x)?.value;
            max_difference = max_difference.max((lhs[j][k] - rhs[j][k]).abs());
        }
    }
    Ok(TransformCheck {
        lhs,
        rhs,
        max_difference,
    })
}

/// Matrix-order covariant derivative: the per-eigenvalue values and their
/// assembly `sum_i G_i nabla^{lambda_i}`.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixCovariant {
    /// `(eigenvalue, nabla_b V_l for every l)`
    pub slices: Vec<(f64, Vec<f64>)>,
    #[serde(skip)]
    pub assembled: Vec<CMat>,
}

fn positive_orders(a: &MatrixOrder) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for &(lam, _) in a.eigenvalues() {
        if lam.im != 0.0 || !(lam.re > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        out.push(lam.re);
    }
    if !a.is_diagonalizable() {
        return Err(Error::NonDiagonalizableOrder);
    }
    Ok(out)
}

pub fn matrix_covariant(v: &VectorField, map: &CoordMap, a: &MatrixOrder, spec: &CovariantSpec, b: usize, y: &[f64]) -> Result<MatrixCovariant> {
    let orders = positive_orders(a)?;
    let n = map.dim();
    let m = a.dim();
    let mut slices = Vec::new();
    for &lam in &orders {
        slices.push((lam, covariant_direct(v, map, &spec.with_order(lam), b, y)?));
    }
    let mut assembled = vec![CMat::zeros(m, m); n];
    for ((_, vals), (_, g)) in slices.iter().zip(a.projectors()) {
        for (l, out) in assembled.iter_mut().enumerate() {
            *out += g * Complex64::new(vals[l], 0.0);
        }
    }
    Ok(MatrixCovariant { slices, assembled })
}

/// `D^A V_l + gamma^A_{lb}` with the connection summed as a series of
/// matrices, `C(A, sI)` from the matrix binomial and the remaining factors
/// as spectral sums.
pub fn matrix_covariant_series(v: &VectorField, map: &CoordMap, a: &MatrixOrder, spec: &CovariantSpec, b: usize, y: &[f64]) -> Result<Vec<CMat>> {
    let orders = positive_orders(a)?;
    check_dims(v, map, y)?;
    let n = map.dim();
    let m = a.dim();
    let caches: Vec<Arc<JacobianCache>> = orders
        .iter()
        .map(|&lam| JacobianCache::new(map, lam, spec.jacobian_tolerance))
        .collect();
    let real = |z: f64| Complex64::new(z, 0.0);
    let index_of = |lam: Complex64| orders.iter().position(|&o| o == lam.re).unwrap_or(0);

    // J_l^k(x, y, A) for all k, l
    let mut jf = vec![vec![CMat::zeros(m, m); n]; n];
    for (k, row) in jf.iter_mut().enumerate() {
        for (l, cell) in row.iter_mut().enumerate() {
            *cell = a.spectral_sum(|lam| Ok(real(caches[index_of(lam)].at(y)?.forward[k][l])))?;
        }
    }
    let plain_spec = DifferintSpec::new(b, 0.0, map.lower_y[b])
        .with_tolerance(spec.tolerance)
        .with_scheme(Scheme::Quadrature);
    let mut out: Vec<CMat> = v
        .components
        .iter()
        .map(|c| matrix_differint(a, c, &plain_spec, y))
        .collect::<Result<_>>()?;
    let mut connection = vec![CMat::zeros(m, m); n];
    for s in 1..=MAX_SERIES_ORDER {
        let c = matrix_binomial(a, s)?;
        let dv: Vec<CMat> = v
            .components
            .iter()
            .map(|va| {
                a.spectral_sum(|lam| {
                    let sp = plain_spec.with_order(lam.re - s as f64);
                    Ok(real(differint(va.as_ref(), &sp, y)?.value))
                })
            })
            .collect::<Result<_>>()?;
        let per_order: Vec<Matrix> = caches
            .iter()
            .map(|cache| reverse_derivative(cache, y, b, s))
            .collect::<Result<_>>()?;
        let mut tail: f64 = 0.0;
        for (l, conn) in connection.iter_mut().enumerate() {
            let mut term = CMat::zeros(m, m);
            for k in 0..n {
                for (av, dva) in dv.iter().enumerate() {
                    let dw = a.spectral_sum(|lam| Ok(real(per_order[index_of(lam)][av][k])))?;
                    term += &jf[k][l] * &c * dva * dw;
                }
            }
            tail = tail.max(crate::matrix::max_abs(&term));
            *conn += term;
        }
        let size = connection
            .iter()
            .map(crate::matrix::max_abs)
            .fold(1.0, f64::max);
        if tail <= spec.tolerance * size {
            for (o, c) in out.iter_mut().zip(connection) {
                *o += c;
            }
            return Ok(out);
        }
    }
    Err(Error::SeriesNoConverge {
        terms: MAX_SERIES_ORDER as usize,
        tail: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn polar() -> CoordMap {
        CoordMap::polar().with_limits(vec![0.0, 0.0], vec![1.0, 0.5]).unwrap()
    }

    #[test]
    fn classical_polar_christoffel() {
        // covector (0, 1): nabla_b V_l = -Gamma^theta_{bl}
        let v = VectorField::parse(&["0", "1"]).unwrap();
        let y = [1.5, FRAC_PI_4];
        let spec = CovariantSpec::new(1.0);
        let dth = covariant_direct(&v, &polar(), &spec, 1, &y).unwrap();
        assert!((dth[0] + 1.0 / 1.5).abs() < 1e-6, "{dth:?}");
        assert!(dth[1].abs() < 1e-6, "{dth:?}");
        let dr = covariant_direct(&v, &polar(), &spec, 0, &y).unwrap();
        assert!(dr[0].abs() < 1e-6 && (dr[1] + 1.0 / 1.5).abs() < 1e-6, "{dr:?}");
    }

    #[test]
    fn zero_field() {
        let v = VectorField::zero(2);
        let r = covariant_direct(&v, &polar(), &CovariantSpec::new(0.5), 0, &[1.5, FRAC_PI_4]).unwrap();
        assert_eq!(r, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_chart_is_plain_differint() {
        let map = CoordMap::identity(2);
        let v = VectorField::parse(&["x1*x2 + 1", "x1^2"]).unwrap();
        let spec = CovariantSpec::new(0.5);
        let y = [0.8, 1.3];
        for b in 0..2 {
            let c = covariant_direct(&v, &map, &spec, b, &y).unwrap();
            let d = plain_differint(&v, &map, &spec, b, &y).unwrap();
            for l in 0..2 {
                assert!((c[l] - d[l]).abs() < 1e-12, "{c:?} {d:?}");
            }
            let g = connection_functional(&v, &map, &spec, b, &y).unwrap();
            assert!(g.value.iter().all(|x| x.abs() < 1e-12), "{g:?}");
        }
    }

    #[test]
    fn negative_order_rejected() {
        let v = VectorField::zero(2);
        assert!(matches!(
            covariant_direct(&v, &polar(), &CovariantSpec::new(-0.5), 0, &[1.5, 0.7]),
            Err(Error::UnsupportedOrder(_))
        ));
    }

    #[test]
    fn classical_connection_single_term() {
        let v = VectorField::parse(&["x1", "x2"]).unwrap();
        let g = connection_functional(&v, &polar(), &CovariantSpec::new(1.0), 1, &[1.5, FRAC_PI_4]).unwrap();
        assert_eq!(g.terms, 2);
        // -Gamma^a_{theta l} V_a: l = r gives -V_theta / r, l = theta gives r V_r
        assert!((g.value[0] + FRAC_PI_4 / 1.5).abs() < 1e-6, "{g:?}");
        assert!((g.value[1] - 1.5 * 1.5).abs() < 1e-6, "{g:?}");
    }

    #[test]
    fn classical_decomposition() {
        let v = VectorField::parse(&["x1*x2", "cos(x2)"]).unwrap();
        for b in 0..2 {
            let d = decomposition(&v, &polar(), &CovariantSpec::new(1.0), b, &[1.5, FRAC_PI_4]).unwrap();
            assert!(d.residual < 1e-8, "{d:?}");
        }
    }

    #[test]
    fn matrix_slices_and_series() {
        let a = MatrixOrder::from_real(&[vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap();
        let v = VectorField::parse(&["x1", "x1*x2"]).unwrap();
        let spec = CovariantSpec::new(0.0);
        let y = [1.5, FRAC_PI_4];
        let mc = matrix_covariant(&v, &polar(), &a, &spec, 0, &y).unwrap();
        for (lam, vals) in &mc.slices {
            let direct = covariant_direct(&v, &polar(), &spec.with_order(*lam), 0, &y).unwrap();
            assert_eq!(&direct, vals);
        }
        // at A = I the binomial series terminates
        let a = MatrixOrder::from_real(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let mc = matrix_covariant(&v, &polar(), &a, &spec, 1, &y).unwrap();
        let series = matrix_covariant_series(&v, &polar(), &a, &spec, 1, &y).unwrap();
        for l in 0..2 {
            let d = crate::matrix::max_abs(&(&series[l] - &mc.assembled[l]));
            assert!(d < 1e-6, "{l}: {d}");
        }
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let a = MatrixOrder::from_real(&[vec![1.0, 0.0], vec![0.0, -0.5]]).unwrap();
        let v = VectorField::zero(2);
        let r = matrix_covariant(&v, &polar(), &a, &CovariantSpec::new(0.0), 0, &[1.5, 0.7]);
        assert!(matches!(r, Err(Error::NotPositiveDefinite)));
    }
}
