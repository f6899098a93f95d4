//! Fractional coordinate transformations.
//!
//! For Cartesian coordinates `x_i(y)` the differentials of order `nu` satisfy,
//! for each `k`,
//!
//! ```text
//! sum_i dx_i^nu D^nu_{x_i}(x_k) = sum_j dy_j^nu D^nu_{y_j}(x_k(y))
//! ```
//!
//! With `A[i][k] = D^nu_{x_i}(x_k)` and `B[k][j] = D^nu_{y_j}(x_k(y))` this is
//! `A^T M = B` for the matrix `M[i][j] = J_j^i(x, y, nu)` in
//! `dx_i^nu = sum_j dy_j^nu M[i][j]`, solved column by column with Cramer's
//! rule. The reverse matrix `W[j][i] = J_i^j(y, x, nu)` is `M^-1`.

use crate::differint::{differint, DifferintSpec};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{self, Field};
use crate::forms::det;
use serde::Serialize;

/// A chart: Cartesian coordinates as functions of curvilinear ones and back,
/// with lower limits on both sides.
#[derive(Debug, Clone)]
pub struct CoordMap {
    pub name: String,
    /// x_i(y)
    pub forward: Vec<Expr>,
    /// y_j(x)
    pub inverse: Vec<Expr>,
    /// Cartesian lower limits a_i
    pub lower_x: Vec<f64>,
    /// curvilinear lower limits
    pub lower_y: Vec<f64>,
}

fn parse_all(srcs: &[&str]) -> Vec<Expr> {
    srcs.iter()
        .map(|s| Expr::parse(s).expect("built-in chart expression"))
        .collect()
}

impl CoordMap {
    pub fn new(name: &str, forward: Vec<Expr>, inverse: Vec<Expr>, lower_x: Vec<f64>, lower_y: Vec<f64>) -> Result<Self> {
        let n = forward.len();
        if n == 0 || inverse.len() != n || lower_x.len() != n || lower_y.len() != n {
            return Err(Error::Invalid(format!("chart {name} has inconsistent dimensions")));
        }
        Ok(CoordMap {
            name: name.to_string(),
            forward,
            inverse,
            lower_x,
            lower_y,
        })
    }

    pub fn identity(n: usize) -> Self {
        let e: Vec<Expr> = (0..n).map(crate::expr::var).collect();
        CoordMap {
            name: "identity".into(),
            forward: e.clone(),
            inverse: e,
            lower_x: vec![0.0; n],
            lower_y: vec![0.0; n],
        }
    }

    /// x = r cos(theta), y = r sin(theta); curvilinear order (r, theta).
    pub fn polar() -> Self {
        CoordMap {
            name: "polar".into(),
            forward: parse_all(&["x1*cos(x2)", "x1*sin(x2)"]),
            inverse: parse_all(&["sqrt(x1^2 + x2^2)", "atan2(x2, x1)"]),
            lower_x: vec![0.0, 0.0],
            lower_y: vec![0.0, 0.0],
        }
    }

    /// x1 = 2 y1 + y2, x2 = y2.
    pub fn shear() -> Self {
        CoordMap {
            name: "shear".into(),
            forward: parse_all(&["2*x1 + x2", "x2"]),
            inverse: parse_all(&["(x1 - x2)/2", "x2"]),
            lower_x: vec![0.0, 0.0],
            lower_y: vec![0.0, 0.0],
        }
    }

    /// x1 = e^{y1} cos y2, x2 = e^{y1} sin y2.
    pub fn exp_radial() -> Self {
        CoordMap {
            name: "exp-radial".into(),
            forward: parse_all(&["exp(x1)*cos(x2)", "exp(x1)*sin(x2)"]),
            inverse: parse_all(&["ln(sqrt(x1^2 + x2^2))", "atan2(x2, x1)"]),
            lower_x: vec![0.0, 0.0],
            lower_y: vec![0.0, 0.0],
        }
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "polar" => Ok(Self::polar()),
            "shear" => Ok(Self::shear()),
            "exp-radial" => Ok(Self::exp_radial()),
            "identity" => Ok(Self::identity(2)),
            other => Err(Error::Invalid(format!("unknown chart {other}"))),
        }
    }

    pub fn with_limits(mut self, lower_x: Vec<f64>, lower_y: Vec<f64>) -> Result<Self> {
        let n = self.dim();
        if lower_x.len() != n || lower_y.len() != n {
            return Err(Error::AmbientMismatch(lower_x.len().max(lower_y.len()), n));
        }
        self.lower_x = lower_x;
        self.lower_y = lower_y;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.forward.len()
    }

    pub fn to_cartesian(&self, y: &[f64]) -> Vec<f64> {
        self.forward.iter().map(|e| e.eval(y)).collect()
    }

    pub fn to_curvilinear(&self, x: &[f64]) -> Vec<f64> {
        self.inverse.iter().map(|e| e.eval(x)).collect()
    }

    /// Largest |y - y(x(y))| over the sample points.
    pub fn round_trip_error(&self, points: &[Vec<f64>]) -> f64 {
        points
            .iter()
            .map(|y| {
                let back = self.to_curvilinear(&self.to_cartesian(y));
                back.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

pub type Matrix = Vec<Vec<f64>>;

fn spec(var: usize, nu: f64, lower: f64, tol: f64) -> DifferintSpec {
    DifferintSpec::new(var, nu, lower).with_tolerance(tol)
}

/// `(A, B)` with `A[i][k] = D^nu_{x_i}(x_k)` at the Cartesian image of `y`
/// and `B[k][j] = D^nu_{y_j}(x_k(y))` at `y`.
pub fn system_matrix(map: &CoordMap, nu: f64, y: &[f64]) -> Result<(Matrix, Matrix)> {
    system_matrix_tol(map, nu, y, 1e-10)
}

pub fn system_matrix_tol(map: &CoordMap, nu: f64, y: &[f64], tol: f64) -> Result<(Matrix, Matrix)> {
    let n = map.dim();
    if y.len() != n {
        return Err(Error::AmbientMismatch(y.len(), n));
    }
    let x = map.to_cartesian(y);
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (k, cell) in row.iter_mut().enumerate() {
            *cell = differint(&crate::expr::var(k), &spec(i, nu, map.lower_x[i], tol), &x)?.value;
        }
    }
    for k in 0..n {
        for j in 0..n {
            b[k][j] = differint(&map.forward[k], &spec(j, nu, map.lower_y[j], tol), y)?.value;
        }
    }
    Ok((a, b))
}

fn transpose(m: &Matrix) -> Matrix {
    let n = m.len();
    (0..n).map(|i| (0..n).map(|j| m[j][i]).collect()).collect()
}

fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn invert(m: &Matrix) -> Result<Matrix> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col] == 0.0 {
            return Err(Error::SingularSystem { det: 0.0 });
        }
        a.swap(piv, col);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    Ok(a.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Determinant of `m` after scaling rows, then columns, to unit max norm.
/// Zero for a matrix with a zero row or column.
pub fn equilibrated_det(m: &Matrix) -> f64 {
    let mut s = m.clone();
    for row in s.iter_mut() {
        let r = row.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()));
        if r == 0.0 {
            return 0.0;
        }
        row.iter_mut().for_each(|v| *v /= r);
    }
    let n = s.len();
    for c in 0..n {
        let r = (0..n).fold(0.0, |acc: f64, i| acc.max(s[i][c].abs()));
        if r == 0.0 {
            return 0.0;
        }
        for row in s.iter_mut() {
            row[c] /= r;
        }
    }
    det(&s)
}

/// Solves `A^T M = B` by Cramer's rule. Returns `(M, det A, residual)`.
///
/// The system is singular when the determinant of the row- and
/// column-equilibrated `A` falls below `1e-12` in magnitude, or when the
/// solution exceeds `1e12 max(1, |B| / |A|)` in max norm.
pub fn cramer_solve(a: &Matrix, b: &Matrix) -> Result<(Matrix, f64, f64)> {
    let n = a.len();
    let at = transpose(a);
    let d = det(&at);
    if !(equilibrated_det(&at).abs() > 1e-12) || d == 0.0 {
        return Err(Error::SingularSystem { det: d });
    }
    let mut m = vec![vec![0.0; n]; n];
    for j in 0..n {
        for i in 0..n {
            // column i of A^T replaced by column j of B
            let mut ai = at.clone();
            for (r, row) in ai.iter_mut().enumerate() {
                row[i] = b[r][j];
            }
            m[i][j] = det(&ai) / d;
        }
    }
    let norm = |x: &Matrix| x.iter().flatten().fold(0.0, |acc: f64, v| acc.max(v.abs()));
    let growth = norm(&m);
    if !(growth <= 1e12 * (norm(b) / norm(a)).max(1.0)) {
        return Err(Error::SingularSystem { det: d });
    }
    let lhs = matmul(&at, &m);
    let mut residual: f64 = 0.0;
    for r in 0..n {
        for c in 0..n {
            residual = residual.max((lhs[r][c] - b[r][c]).abs());
        }
    }
    Ok((m, d, residual))
}

#[derive(Debug, Clone, Serialize)]
pub struct TransformMatrix {
    pub order: f64,
    /// `forward[i][j] = J_j^i(x, y, nu)`: dx_i = sum_j dy_j forward[i][j]
    pub forward: Matrix,
    /// `reverse[j][i] = J_i^j(y, x, nu)`: dy_j = sum_i dx_i reverse[j][i]
    pub reverse: Matrix,
    pub det_system: f64,
    /// largest defect of the solved linear system
    pub residual: f64,
}

impl TransformMatrix {
    /// `det` of the forward matrix, the volume factor of the chart.
    pub fn volume(&self) -> f64 {
        det(&self.forward)
    }
}

pub fn jacobian(map: &CoordMap, nu: f64, y: &[f64]) -> Result<TransformMatrix> {
    jacobian_tol(map, nu, y, 1e-10)
}

pub fn jacobian_tol(map: &CoordMap, nu: f64, y: &[f64], tol: f64) -> Result<TransformMatrix> {
    let (a, b) = system_matrix_tol(map, nu, y, tol)?;
    let (m, d, residual) = cramer_solve(&a, &b)?;
    let w = invert(&m)?;
    Ok(TransformMatrix {
        order: nu,
        forward: m,
        reverse: w,
        det_system: d,
        residual,
    })
}

/// The reverse matrix solved from its own system, with the chart's roles
/// swapped (curvilinear coordinates as functions of Cartesian ones), at the
/// Cartesian point `x`. Returns `W' ` with `dy_j = sum_i dx_i W'[j][i]`.
pub fn reverse_system_jacobian(map: &CoordMap, nu: f64, x: &[f64]) -> Result<Matrix> {
    let swapped = CoordMap {
        name: format!("{}-reverse", map.name),
        forward: map.inverse.clone(),
        inverse: map.forward.clone(),
        lower_x: map.lower_y.clone(),
        lower_y: map.lower_x.clone(),
    };
    let (a, b) = system_matrix(&swapped, nu, x)?;
    let (m, _, _) = cramer_solve(&a, &b)?;
    Ok(m)
}

#[derive(Debug, Clone, Serialize)]
pub struct FracMetric {
    pub order: f64,
    pub g: Matrix,
    pub g_inv: Matrix,
}

/// `g_ij = sum_k J_i^k(x, y) J_j^k(x, y)`, which makes the Cartesian inner
/// product of 1-forms invariant: components transform as `alpha_y = M^T alpha_x`.
pub fn metric(map: &CoordMap, nu: f64, y: &[f64]) -> Result<FracMetric> {
    let t = jacobian(map, nu, y)?;
    metric_from(&t)
}

pub fn metric_from(t: &TransformMatrix) -> Result<FracMetric> {
    let m = &t.forward;
    let g = matmul(&transpose(m), m);
    let g_inv = matmul(&t.reverse, &transpose(&t.reverse));
    Ok(FracMetric {
        order: t.order,
        g,
        g_inv,
    })
}

/// Curvilinear components of a Cartesian 1-form: `alpha_y[j] = sum_i M[i][j] alpha_x[i]`.
pub fn pull_back_one_form(t: &TransformMatrix, alpha_x: &[f64]) -> Vec<f64> {
    let n = alpha_x.len();
    (0..n)
        .map(|j| (0..n).map(|i| t.forward[i][j] * alpha_x[i]).sum())
        .collect()
}

/// Per-component comparison of a computed matrix against reference values.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub component: String,
    pub computed: f64,
    pub reference: f64,
    pub difference: f64,
}

/// Reference coefficients of `dx^{-1}` in the polar chart at angle `theta`:
/// `(2 tan(theta) - 1)/3` for `dr^{-1}` and
/// `-2 (tan^2(theta) + 2) / (3 r sin(theta))` for `dtheta^{-1}`.
pub fn polar_reference(r: f64, theta: f64) -> (f64, f64) {
    let t = theta.tan();
    ((2.0 * t - 1.0) / 3.0, -2.0 * (t * t + 2.0) / (3.0 * r * theta.sin()))
}

/// The polar worked example at order -1 with all lower limits zero.
#[derive(Debug, Clone, Serialize)]
pub struct PolarExample {
    pub r: f64,
    pub theta: f64,
    pub system_a: Matrix,
    pub system_b: Matrix,
    pub transform: TransformMatrix,
    pub comparison: Vec<Comparison>,
}

pub fn polar_example(r: f64, theta: f64) -> Result<PolarExample> {
    let map = CoordMap::polar();
    let y = [r, theta];
    let (a, b) = system_matrix(&map, -1.0, &y)?;
    let t = jacobian(&map, -1.0, &y)?;
    let (dr, dth) = polar_reference(r, theta);
    let comparison = vec![
        Comparison {
            component: "dx: dr".into(),
            computed: t.forward[0][0],
            reference: dr,
            difference: t.forward[0][0] - dr,
        },
        Comparison {
            component: "dx: dtheta".into(),
            computed: t.forward[0][1],
            reference: dth,
            difference: t.forward[0][1] - dth,
        },
    ];
    Ok(PolarExample {
        r,
        theta,
        system_a: a,
        system_b: b,
        transform: t,
        comparison,
    })
}

/// Per-eigenvalue transformation matrices of a diagonalizable order matrix,
/// assembled entrywise as `sum_l G_l J(lambda_l)`. Entry `[i][j]` is an
/// m x m matrix.
pub fn matrix_order_jacobian(
    map: &CoordMap,
    a: &crate::matrix::MatrixOrder,
    y: &[f64],
) -> Result<(Vec<(f64, TransformMatrix)>, Vec<Vec<crate::matrix::CMat>>)> {
    use num_complex::Complex64;
    if !a.is_diagonalizable() {
        return Err(Error::NonDiagonalizableOrder);
    }
    let n = map.dim();
    let mut slices = Vec::new();
    for &(lam, _) in a.eigenvalues() {
        if lam.im != 0.0 {
            return Err(Error::UnsupportedOrder(format!("complex eigenvalue {lam}")));
        }
        slices.push((lam.re, jacobian(map, lam.re, y)?));
    }
    let m = a.dim();
    let mut out = vec![vec![crate::matrix::CMat::zeros(m, m); n]; n];
    for ((_, t), (_, g)) in slices.iter().zip(a.projectors()) {
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell += g * Complex64::new(t.forward[i][j], 0.0);
            }
        }
    }
    Ok((slices, out))
}

/// `x_k(y)` fields of a chart, for use as scalar fields.
pub fn forward_field(map: &CoordMap, k: usize) -> crate::field::FieldRef {
    field::expr(map.forward[k].clone())
}

/// Evaluates any scalar field at the Cartesian image of `y`.
pub fn eval_at_image(map: &CoordMap, f: &dyn Field, y: &[f64]) -> Result<f64> {
    f.eval(&map.to_cartesian(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_3, PI};

    #[test]
    fn identity_chart_gives_identity() {
        let map = CoordMap::identity(2);
        for nu in [-1.0, -0.5, 0.5, 1.0] {
            let t = jacobian(&map.clone().with_limits(vec![0.0; 2], vec![0.0; 2]).unwrap(), nu, &[0.8, 1.3]).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((t.forward[i][j] - e).abs() < 1e-9, "{nu}: {:?}", t.forward);
                }
            }
        }
    }

    #[test]
    fn polar_system_at_minus_one() {
        let (r, th) = (2.0, FRAC_PI_3);
        let (a, b) = system_matrix(&CoordMap::polar(), -1.0, &[r, th]).unwrap();
        let (x, y) = (r * th.cos(), r * th.sin());
        let expect = [[x * x / 2.0, x * y], [x * y, y * y / 2.0]];
        for i in 0..2 {
            for k in 0..2 {
                assert!((a[i][k] - expect[i][k]).abs() < 1e-12, "{a:?}");
            }
        }
        assert!((b[0][0] - r * r * th.cos() / 2.0).abs() < 1e-12);
        assert!((b[0][1] - r * th.sin()).abs() < 1e-12);
    }

    #[test]
    fn polar_classical_jacobian() {
        let (r, th) = (1.7, 0.6);
        let t = jacobian(&CoordMap::polar(), 1.0, &[r, th]).unwrap();
        assert!((t.forward[0][0] - th.cos()).abs() < 1e-12);
        assert!((t.forward[0][1] + r * th.sin()).abs() < 1e-12);
        let g = metric_from(&t).unwrap();
        assert!((g.g[0][0] - 1.0).abs() < 1e-12 && (g.g[1][1] - r * r).abs() < 1e-12);
        assert!(g.g[0][1].abs() < 1e-12);
    }

    #[test]
    fn singular_on_axis() {
        let r = jacobian(&CoordMap::polar(), -1.0, &[1.0, PI / 2.0]);
        assert!(matches!(r, Err(Error::SingularSystem { .. })), "{r:?}");
    }

    #[test]
    fn chart_round_trips() {
        let pts = vec![vec![1.2, 0.4], vec![0.5, 1.1]];
        for name in ["polar", "shear", "exp-radial", "identity"] {
            assert!(CoordMap::builtin(name).unwrap().round_trip_error(&pts) < 1e-12, "{name}");
        }
    }
}
