//! Matrix-order differintegrals.
//!
//! A square order matrix `A` is classified as normal, diagonalizable or
//! defective. Diagonalizable orders act through their spectral projectors,
//! `D^A f = sum_i G_i D^(lambda_i) f`; defective ones through Jordan blocks
//! whose superdiagonals carry derivatives of the differintegral with respect
//! to its order.

use crate::differint::{self, lambda_derivative, lazy_differint, ridders, DifferintSpec};
use crate::error::{Error, Result};
use crate::field::FieldRef;
use crate::special::{binomial_complex, gamma, rgamma};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use std::cell::RefCell;
use std::collections::HashMap;

pub type CMat = DMatrix<Complex64>;

const CLUSTER_TOL: f64 = 1e-9;
const RANK_TOL: f64 = 1e-9;
const MAX_COND: f64 = 1e10;
const DEFECTIVE_CLUSTER_TOL: f64 = 1e-4;
/// eigenvector conditioning above which a split cluster is treated as one
const SPLIT_COND: f64 = 1e6;
const MAX_DIM: usize = 8;
const MAX_JORDAN_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Normal,
    Diagonalizable,
    JordanOnly,
}

/// A decomposed order matrix. Immutable after construction.
#[derive(Debug, Clone)]
pub struct MatrixOrder {
    entries: CMat,
    classification: Classification,
    /// distinct eigenvalues, ascending by (re, im), with algebraic multiplicity
    eigenvalues: Vec<(Complex64, usize)>,
    /// columns: eigenvectors, or Jordan chains ordered so J has ones above the diagonal
    p: CMat,
    p_inv: CMat,
    /// (eigenvalue, size) per Jordan block in column order of `p`
    blocks: Vec<(Complex64, usize)>,
    /// spectral projectors per distinct eigenvalue (diagonalizable only)
    projectors: Vec<(Complex64, CMat)>,
}

fn scale_of(z: Complex64) -> f64 {
    z.norm().max(1.0)
}

fn cmp_complex(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

fn rank(m: &CMat, tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Orthonormal basis of the null space, as columns.
fn null_space(m: &CMat, tol: f64) -> Vec<nalgebra::DVector<Complex64>> {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut out = Vec::new();
    for k in 0..n {
        let s = if k < svd.singular_values.len() {
            svd.singular_values[k]
        } else {
            0.0
        };
        if s <= tol {
            out.push(v_t.row(k).adjoint());
        }
    }
    out
}

fn condition(m: &CMat) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn real_matrix(rows: &[Vec<f64>]) -> Result<CMat> {
    let m = rows.len();
    if m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(Error::Invalid("order matrix must be square and non-empty".into()));
    }
    Ok(CMat::from_fn(m, m, |i, j| Complex64::new(rows[i][j], 0.0)))
}

pub fn diag(values: &[f64]) -> CMat {
    let m = values.len();
    CMat::from_fn(m, m, |i, j| {
        if i == j {
            Complex64::new(values[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Candidate vectors from a basis: the basis itself, then fixed mixtures.
fn candidates(basis: &[nalgebra::DVector<Complex64>]) -> Vec<nalgebra::DVector<Complex64>> {
    let mut out: Vec<_> = basis.to_vec();
    for seed in 1..=8u32 {
        let mut v = basis[0].clone() * Complex64::new(0.0, 0.0);
        for (k, b) in basis.iter().enumerate() {
            let w = ((seed as f64 + 1.0) * (k as f64 + 1.0) * 0.618_033_988_75).fract() - 0.5;
            v += b * Complex64::new(w, 0.0);
        }
        out.push(v);
    }
    out
}

/// Groups sorted eigenvalues closer than `tol` (relative) and averages each
/// group; the mean of a split cluster is far more accurate than its members.
fn cluster(raw: &[Complex64], tol: f64) -> Vec<(Complex64, usize)> {
    let mut groups: Vec<(usize, Complex64)> = Vec::new();
    for &z in raw {
        match groups.last_mut() {
            Some((k, s)) if (*s / *k as f64 - z).norm() <= tol * scale_of(z) => {
                *k += 1;
                *s += z;
            }
            _ => groups.push((1, z)),
        }
    }
    groups
        .into_iter()
        .map(|(k, s)| {
            let mut v = s / k as f64;
            if v.im.abs() <= 1e-12 * scale_of(v) {
                v.im = 0.0;
            }
            if (v.re - v.re.round()).abs() <= 1e-13 * scale_of(v) {
                v.re = v.re.round();
            }
            (v, k)
        })
        .collect()
}

impl MatrixOrder {
    pub fn new(entries: CMat) -> Result<Self> {
        let m = entries.nrows();
        if m == 0 || entries.ncols() != m {
            return Err(Error::Invalid("order matrix must be square".into()));
        }
        if m > MAX_DIM {
            return Err(Error::Invalid(format!("order matrix size {m} exceeds {MAX_DIM}")));
        }
        let a_norm = norm(&entries);
        if a_norm == 0.0 {
            return Err(Error::ZeroMatrix);
        }

        let (_, t) = entries.clone().schur().unpack();
        let mut raw: Vec<Complex64> = (0..m).map(|i| t[(i, i)]).collect();
        for z in raw.iter_mut() {
            if z.im.abs() <= 1e-13 * a_norm {
                z.im = 0.0;
            }
        }
        raw.sort_by(cmp_complex);
        let ident = CMat::identity(m, m);
        let tol = RANK_TOL * a_norm.max(1.0);
        let is_diagonalizable = |eigenvalues: &[(Complex64, usize)]| {
            eigenvalues.iter().all(|&(lam, k)| {
                let shifted = &entries - &ident * lam;
                m - rank(&shifted, tol) == k
            })
        };
        let mut eigenvalues = cluster(&raw, CLUSTER_TOL);
        let mut diagonalizable = is_diagonalizable(&eigenvalues);
        if !diagonalizable {
            // a defective eigenvalue of multiplicity k splits by about eps^(1/k)
            let loose = cluster(&raw, DEFECTIVE_CLUSTER_TOL);
            if loose.len() < eigenvalues.len() {
                eigenvalues = loose;
                diagonalizable = is_diagonalizable(&eigenvalues);
            }
        } else {
            // a split defective pair passes the rank test with two nearly
            // parallel eigenvectors
            let loose = cluster(&raw, DEFECTIVE_CLUSTER_TOL);
            if loose.len() < eigenvalues.len() {
                let cols: Vec<_> = eigenvalues
                    .iter()
                    .flat_map(|&(lam, _)| null_space(&(&entries - &ident * lam), tol))
                    .collect();
                if cols.len() != m || !(condition(&CMat::from_columns(&cols)) <= SPLIT_COND) {
                    eigenvalues = loose;
                    diagonalizable = is_diagonalizable(&eigenvalues);
                }
            }
        }
        let commutator = &entries * entries.adjoint() - entries.adjoint() * &entries;
        let normal = norm(&commutator) <= 1e-12 * a_norm * a_norm;

        let mut cols = Vec::new();
        let mut blocks = Vec::new();
        if diagonalizable {
            for &(lam, k) in &eigenvalues {
                let shifted = &entries - &ident * lam;
                let basis = null_space(&shifted, tol);
                if basis.len() != k {
                    return Err(Error::IllConditioned(format!(
                        "eigenspace of {lam} has dimension {} for multiplicity {k}",
                        basis.len()
                    )));
                }
                for v in basis {
                    cols.push(v);
                    blocks.push((lam, 1));
                }
            }
        } else {
            if m > MAX_JORDAN_DIM {
                return Err(Error::IllConditioned(format!(
                    "defective {m}x{m} order; Jordan forms are computed up to {MAX_JORDAN_DIM}x{MAX_JORDAN_DIM}"
                )));
            }
            for &(lam, k) in &eigenvalues {
                // a repeated eigenvalue is only known to about sqrt(eps)
                let (c, b) = jordan_chains(&entries, lam, k, tol * 1e3)?;
                cols.extend(c);
                blocks.extend(b);
            }
        }
        let p = CMat::from_columns(&cols);
        let cond = condition(&p);
        if !(cond <= MAX_COND) {
            return Err(Error::IllConditioned(format!(
                "eigenvector matrix condition number {cond:.3e}"
            )));
        }
        let p_inv = if normal && diagonalizable {
            p.adjoint()
        } else {
            p.clone()
                .try_inverse()
                .ok_or_else(|| Error::IllConditioned("singular eigenvector matrix".into()))?
        };

        let projectors = if diagonalizable {
            eigenvalues
                .iter()
                .map(|&(li, _)| {
                    let mut g = ident.clone();
                    for &(lj, _) in &eigenvalues {
                        if lj != li {
                            g = g * (&entries - &ident * lj) / (li - lj);
                        }
                    }
                    (li, g)
                })
                .collect()
        } else {
            Vec::new()
        };

        let classification = if !diagonalizable {
            Classification::JordanOnly
        } else if normal {
            Classification::Normal
        } else {
            Classification::Diagonalizable
        };
        let order = MatrixOrder {
            entries,
            classification,
            eigenvalues,
            p,
            p_inv,
            blocks,
            projectors,
        };
        let rebuilt = &order.p * order.jordan_matrix() * &order.p_inv;
        let defect = norm(&(rebuilt - &order.entries));
        if defect > 1e-8 * a_norm {
            return Err(Error::IllConditioned(format!(
                "decomposition reconstructs the matrix only to {defect:.3e}"
            )));
        }
        Ok(order)
    }

    pub fn from_real(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(real_matrix(rows)?)
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn classification(&self) -> Classification {
        self.classification
    }

    pub fn is_diagonalizable(&self) -> bool {
        self.classification != Classification::JordanOnly
    }

    pub fn eigenvalues(&self) -> &[(Complex64, usize)] {
        &self.eigenvalues
    }

    pub fn similarity(&self) -> (&CMat, &CMat) {
        (&self.p, &self.p_inv)
    }

    pub fn jordan_blocks(&self) -> &[(Complex64, usize)] {
        &self.blocks
    }

    pub fn projectors(&self) -> &[(Complex64, CMat)] {
        &self.projectors
    }

    /// Eigenvalue attached to each column of the similarity matrix.
    pub fn column_eigenvalues(&self) -> Vec<Complex64> {
        self.blocks
            .iter()
            .flat_map(|&(lam, size)| std::iter::repeat_n(lam, size))
            .collect()
    }

    /// The Jordan (or diagonal) matrix `P^-1 A P`.
    pub fn jordan_matrix(&self) -> CMat {
        let m = self.dim();
        let mut j = CMat::zeros(m, m);
        let mut at = 0;
        for &(lam, size) in &self.blocks {
            for r in 0..size {
                j[(at + r, at + r)] = lam;
                if r + 1 < size {
                    j[(at + r, at + r + 1)] = Complex64::new(1.0, 0.0);
                }
            }
            at += size;
        }
        j
    }

    /// Largest |sum G_i - I|, |G_i G_i - G_i| and |G_i G_j| entries.
    pub fn projector_defects(&self) -> (f64, f64, f64) {
        let m = self.dim();
        let ident = CMat::identity(m, m);
        let max_abs = |x: &CMat| x.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut sum = CMat::zeros(m, m);
        let mut idem: f64 = 0.0;
        let mut ortho: f64 = 0.0;
        for (i, (_, gi)) in self.projectors.iter().enumerate() {
            sum += gi;
            idem = idem.max(max_abs(&(gi * gi - gi)));
            for (j, (_, gj)) in self.projectors.iter().enumerate() {
                if i != j {
                    ortho = ortho.max(max_abs(&(gi * gj)));
                }
            }
        }
        (max_abs(&(sum - ident)), idem, ortho)
    }

    /// `g(A)` given `g` and its derivatives: `g(lambda, k)` is the k-th
    /// derivative at `lambda`. Jordan blocks carry `g^(k)/k!` on the k-th
    /// superdiagonal.
    pub fn matrix_function_with<G>(&self, mut g: G) -> Result<CMat>
    where
        G: FnMut(Complex64, u32) -> Result<Complex64>,
    {
        let m = self.dim();
        let mut cache: HashMap<(usize, u32), Complex64> = HashMap::new();
        let mut inner = CMat::zeros(m, m);
        let mut at = 0;
        for (bi, &(lam, size)) in self.blocks.iter().enumerate() {
            // identical eigenvalues share values
            let key_block = self
                .blocks
                .iter()
                .position(|&(l, _)| l == lam)
                .unwrap_or(bi);
            for k in 0..size as u32 {
                let v = match cache.get(&(key_block, k)) {
                    Some(v) => *v,
                    None => {
                        let v = g(lam, k).map_err(|e| match e {
                            Error::UnsupportedOrder(s) => Error::UnsupportedOrder(s),
                            other => Error::UndefinedAtEigenvalue(format!("{lam}: {other}")),
                        })?;
                        if !(v.re.is_finite() && v.im.is_finite()) {
                            return Err(Error::UndefinedAtEigenvalue(format!("{lam}")));
                        }
                        cache.insert((key_block, k), v);
                        v
                    }
                };
                let scaled = v / gamma(k as f64 + 1.0);
                for r in 0..size - k as usize {
                    inner[(at + r, at + r + k as usize)] = scaled;
                }
            }
            at += size;
        }
        Ok(&self.p * inner * &self.p_inv)
    }

    /// `g(A)` with derivatives for Jordan blocks taken by central differences.
    pub fn matrix_function<G>(&self, g: G) -> Result<CMat>
    where
        G: Fn(Complex64) -> Result<Complex64>,
    {
        self.matrix_function_with(|lam, k| {
            if k == 0 {
                return g(lam);
            }
            let h0 = 0.1 * scale_of(lam);
            let (re, _) = ridders(|t| g(Complex64::new(t, lam.im)).map(|z| z.re), lam.re, k, h0, 1e-12)?;
            let (im, _) = ridders(|t| g(Complex64::new(t, lam.im)).map(|z| z.im), lam.re, k, h0, 1e-12)?;
            Ok(Complex64::new(re, im))
        })
    }

    /// `sum_i G_i g(lambda_i)` over distinct eigenvalues.
    pub fn spectral_sum<G>(&self, mut g: G) -> Result<CMat>
    where
        G: FnMut(Complex64) -> Result<Complex64>,
    {
        if !self.is_diagonalizable() {
            return Err(Error::NonDiagonalizableOrder);
        }
        let m = self.dim();
        let mut out = CMat::zeros(m, m);
        for (lam, gi) in &self.projectors {
            out += gi * g(*lam)?;
        }
        Ok(out)
    }
}

/// Jordan chains for one eigenvalue, longest first.
fn jordan_chains(
    a: &CMat,
    lam: Complex64,
    mult: usize,
    tol: f64,
) -> Result<(Vec<nalgebra::DVector<Complex64>>, Vec<(Complex64, usize)>)> {
    let m = a.nrows();
    let n = a - CMat::identity(m, m) * lam;
    // ranks of N^j, j = 0..=mult
    let mut powers = vec![CMat::identity(m, m)];
    for j in 1..=mult {
        let next = &powers[j - 1] * &n;
        powers.push(next);
    }
    let ranks: Vec<usize> = powers.iter().map(|p| rank(p, tol)).collect();
    // blocks of size >= j: ranks[j-1] - ranks[j]
    let at_least = |j: usize| ranks[j - 1].saturating_sub(ranks[j]);
    let mut sizes = Vec::new();
    for s in (1..=mult).rev() {
        let count = at_least(s) - if s < mult { at_least(s + 1) } else { 0 };
        sizes.extend(std::iter::repeat_n(s, count));
    }
    if sizes.iter().sum::<usize>() != mult {
        return Err(Error::IllConditioned(format!(
            "Jordan structure of {lam} is numerically ambiguous"
        )));
    }
    let mut cols: Vec<nalgebra::DVector<Complex64>> = Vec::new();
    let mut blocks = Vec::new();
    for &s in &sizes {
        let basis = null_space(&powers[s], tol);
        let mut found = false;
        for v in candidates(&basis) {
            let chain: Vec<_> = (0..s).rev().map(|j| &powers[j] * &v).collect();
            let mut trial = cols.clone();
            trial.extend(chain.iter().cloned());
            let mat = CMat::from_columns(&trial);
            if rank(&mat, tol) == trial.len() {
                cols = trial;
                blocks.push((lam, s));
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::IllConditioned(format!(
                "no Jordan chain of length {s} found for {lam}"
            )));
        }
    }
    Ok((cols, blocks))
}

fn is_real(z: Complex64) -> bool {
    z.im == 0.0
}

/// Scalar `D^lambda f` for a possibly complex eigenvalue. Complex orders
/// need a field of the form `k (x - a)^p`.
fn scalar_differint(f: &FieldRef, spec: &DifferintSpec, lam: Complex64, p: &[f64]) -> Result<Complex64> {
    if is_real(lam) {
        return differint::differint(f.as_ref(), &spec.with_order(lam.re), p).map(|r| Complex64::new(r.value, 0.0));
    }
    let (k, pw) = closed_power(f, spec)?;
    let (coef, expo) = differint::power_rule_oracle(pw, lam)?;
    let base = Complex64::new(p[spec.variable] - spec.lower, 0.0);
    Ok(coef * base.powc(expo) * k)
}

fn closed_power(f: &FieldRef, spec: &DifferintSpec) -> Result<(f64, f64)> {
    let power = f.as_expr().and_then(|e| e.as_power(spec.variable));
    match power {
        Some((k, shift, pw)) if shift == spec.lower || pw == 0.0 => Ok((k, pw)),
        _ => Err(Error::UnsupportedOrder(
            "complex order needs a field of the form k*(x - a)^p".into(),
        )),
    }
}

/// `D^A f` at a point.
///
/// Diagonalizable orders use `sum_i G_i D^(lambda_i) f`; defective orders use
/// `P blockdiag(D^J) P^-1` with `(d/dlambda)^k D^lambda f / k!` on the k-th
/// superdiagonal of each block.
pub fn matrix_differint(a: &MatrixOrder, f: &FieldRef, spec: &DifferintSpec, p: &[f64]) -> Result<CMat> {
    if a.is_diagonalizable() {
        return a.spectral_sum(|lam| scalar_differint(f, spec, lam, p));
    }
    a.matrix_function_with(|lam, k| {
        if k == 0 {
            return scalar_differint(f, spec, lam, p);
        }
        if is_real(lam) {
            let v = lambda_derivative(f.as_ref(), &spec.with_order(lam.re), p, k)?;
            return Ok(Complex64::new(v, 0.0));
        }
        let (kc, pw) = closed_power(f, spec)?;
        let x = p[spec.variable] - spec.lower;
        let eval = |t: f64| {
            let (coef, expo) = differint::power_rule_oracle(pw, Complex64::new(t, lam.im))?;
            Ok(coef * Complex64::new(x, 0.0).powc(expo) * kc)
        };
        let (re, _) = ridders(|t| eval(t).map(|z: Complex64| z.re), lam.re, k, 0.2, 1e-12)?;
        let (im, _) = ridders(|t| eval(t).map(|z: Complex64| z.im), lam.re, k, 0.2, 1e-12)?;
        Ok(Complex64::new(re, im))
    })
}

/// How each scalar pair `D^lambda D^rho f` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    /// Composition laws: semigroup for `rho <= 0`, boundary corrections otherwise.
    Identities,
    /// Literal nesting of numerical operators.
    Nested,
}

/// Which assembly of the composed operator to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Assembly {
    /// `P [R_ij S_ij] Q^-1` with `R = P^-1 Q`.
    Similarity,
    /// `sum_ij G_i H_j S_ij` over distinct eigenvalues.
    Spectral,
}

/// Scalar `D^lambda D^rho f` at `p`.
pub fn scalar_pair(f: &FieldRef, spec: &DifferintSpec, lam: f64, rho: f64, p: &[f64], mode: PairMode) -> Result<f64> {
    match mode {
        PairMode::Nested => {
            let inner = lazy_differint(f, spec.with_order(rho));
            differint::differint(inner.as_ref(), &spec.with_order(lam), p).map(|r| r.value)
        }
        PairMode::Identities => {
            if rho <= 0.0 {
                differint::differint(f.as_ref(), &spec.with_order(lam + rho), p).map(|r| r.value)
            } else {
                let var = spec.variable;
                let a = spec.lower;
                let x = p[var];
                let mut v = differint::differint(f.as_ref(), &spec.with_order(lam + rho), p)?.value;
                for j in 1..=(rho.ceil() as i32) {
                    let kernel = rgamma(1.0 - lam - j as f64);
                    if kernel == 0.0 {
                        continue;
                    }
                    let bv = differint::boundary_value(f.as_ref(), rho - j as f64, var, a, p)?;
                    v -= bv * (x - a).powf(-lam - j as f64) * kernel;
                }
                Ok(v)
            }
        }
    }
}

fn require_real(a: &MatrixOrder) -> Result<()> {
    if a.eigenvalues.iter().all(|(l, _)| is_real(*l)) {
        Ok(())
    } else {
        Err(Error::UnsupportedOrder(
            "composition needs real eigenvalues".into(),
        ))
    }
}

/// `D^A D^B f` at a point.
pub fn compose_matrix_differint(
    a: &MatrixOrder,
    b: &MatrixOrder,
    f: &FieldRef,
    spec: &DifferintSpec,
    p: &[f64],
    mode: PairMode,
    assembly: Assembly,
) -> Result<CMat> {
    if a.dim() != b.dim() {
        return Err(Error::Invalid("order matrices differ in size".into()));
    }
    if !a.is_diagonalizable() || !b.is_diagonalizable() {
        return Err(Error::NonDiagonalizableOrder);
    }
    require_real(a)?;
    require_real(b)?;
    let mut table: HashMap<(u64, u64), f64> = HashMap::new();
    let mut pair = |lam: f64, rho: f64| -> Result<f64> {
        let key = (lam.to_bits(), rho.to_bits());
        if let Some(v) = table.get(&key) {
            return Ok(*v);
        }
        let v = scalar_pair(f, spec, lam, rho, p, mode)?;
        table.insert(key, v);
        Ok(v)
    };
    let m = a.dim();
    match assembly {
        Assembly::Spectral => {
            let mut out = CMat::zeros(m, m);
            for (lam, gi) in &a.projectors {
                for (rho, hj) in &b.projectors {
                    out += gi * hj * Complex64::new(pair(lam.re, rho.re)?, 0.0);
                }
            }
            Ok(out)
        }
        Assembly::Similarity => {
            let la = a.column_eigenvalues();
            let lb = b.column_eigenvalues();
            let r = &a.p_inv * &b.p;
            let mut inner = CMat::zeros(m, m);
            for i in 0..m {
                for j in 0..m {
                    inner[(i, j)] = r[(i, j)] * pair(la[i].re, lb[j].re)?;
                }
            }
            Ok(&a.p * inner * &b.p_inv)
        }
    }
}

/// `((D^A D^B f)^T, D^B D^A f)` for normal real-symmetric orders.
pub fn transpose_identity_check(
    a: &MatrixOrder,
    b: &MatrixOrder,
    f: &FieldRef,
    spec: &DifferintSpec,
    p: &[f64],
    mode: PairMode,
) -> Result<(CMat, CMat)> {
    for o in [a, b] {
        if o.classification != Classification::Normal || o.entries.iter().any(|z| z.im != 0.0) {
            return Err(Error::NotNormal);
        }
    }
    let ab = compose_matrix_differint(a, b, f, spec, p, mode, Assembly::Spectral)?;
    let ba = compose_matrix_differint(b, a, f, spec, p, mode, Assembly::Spectral)?;
    Ok((ab.transpose(), ba))
}

/// Sequential composition `prod_i D^(lambda_i) f` over the eigenvalues with
/// multiplicity, smallest applied first. Returns `(sequential, D^(Tr A) f)`.
pub fn sequential_determinant(a: &MatrixOrder, f: &FieldRef, spec: &DifferintSpec, p: &[f64]) -> Result<(f64, f64)> {
    if !a.is_diagonalizable() {
        return Err(Error::NonDiagonalizableOrder);
    }
    require_real(a)?;
    let orders: Vec<f64> = a
        .eigenvalues
        .iter()
        .flat_map(|&(l, k)| std::iter::repeat_n(l.re, k))
        .collect();
    let (last, inner_orders) = orders.split_last().expect("non-empty spectrum");
    let mut g = f.clone();
    for &o in inner_orders {
        g = lazy_differint(&g, spec.with_order(o));
    }
    let seq = differint::differint(g.as_ref(), &spec.with_order(*last), p)?.value;
    let trace: f64 = orders.iter().sum();
    let tr = differint::differint(f.as_ref(), &spec.with_order(trace), p)?.value;
    Ok((seq, tr))
}

/// `(d^m/dx^m D^A f, D^(A + mI) f)`; the left side differentiates each entry
/// of `x -> D^A f(x)` numerically.
pub fn integer_shift_check(a: &MatrixOrder, m: u32, f: &FieldRef, spec: &DifferintSpec, p: &[f64]) -> Result<(CMat, CMat)> {
    let shifted = MatrixOrder::new(a.entries() + CMat::identity(a.dim(), a.dim()) * Complex64::new(m as f64, 0.0))?;
    let rhs = matrix_differint(&shifted, f, spec, p)?;
    if m == 0 {
        return Ok((matrix_differint(a, f, spec, p)?, rhs));
    }
    let var = spec.variable;
    let x = p[var];
    let memo: RefCell<HashMap<u64, CMat>> = RefCell::new(HashMap::new());
    let at = |t: f64| -> Result<CMat> {
        if let Some(v) = memo.borrow().get(&t.to_bits()) {
            return Ok(v.clone());
        }
        let mut q = p.to_vec();
        q[var] = t;
        let v = matrix_differint(a, f, spec, &q)?;
        memo.borrow_mut().insert(t.to_bits(), v.clone());
        Ok(v)
    };
    let dim = a.dim();
    let h0 = (x - spec.lower) / 16.0;
    let mut lhs = CMat::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            let (re, _) = ridders(|t| at(t).map(|v| v[(i, j)].re), x, m, h0, spec.tolerance)?;
            let (im, _) = ridders(|t| at(t).map(|v| v[(i, j)].im), x, m, h0, spec.tolerance)?;
            lhs[(i, j)] = Complex64::new(re, im);
        }
    }
    Ok((lhs, rhs))
}

/// `C(A, s) = P diag(C(lambda_i, s)) P^-1`.
pub fn matrix_binomial(a: &MatrixOrder, s: u32) -> Result<CMat> {
    a.matrix_function(|lam| Ok(binomial_complex(lam, s)))
}

/// Largest entry modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::field;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn close(a: &CMat, b: &CMat, tol: f64) -> bool {
        max_abs(&(a - b)) <= tol
    }

    #[test]
    fn symmetric_two_by_two() {
        let a = MatrixOrder::from_real(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(a.classification(), Classification::Normal);
        let ev: Vec<f64> = a.eigenvalues().iter().map(|e| e.0.re).collect();
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
        let g3 = &a.projectors()[1].1;
        assert!(close(g3, &CMat::from_element(2, 2, c(0.5)), 1e-12));
        let (s, i, o) = a.projector_defects();
        assert!(s < 1e-12 && i < 1e-12 && o < 1e-12);
    }

    #[test]
    fn conjugated_jordan_block_is_defective() {
        // rounding splits the double eigenvalue by about 1e-8
        let s = real_matrix(&[vec![1.0, 2.0, 0.0], vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0]]).unwrap();
        let j = real_matrix(&[vec![2.0, 1.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 0.5]]).unwrap();
        let a = MatrixOrder::new(&s * j * s.clone().try_inverse().unwrap()).unwrap();
        assert_eq!(a.classification(), Classification::JordanOnly);
        let mut sizes: Vec<usize> = a.jordan_blocks().iter().map(|b| b.1).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, [1, 2]);
    }

    #[test]
    fn close_distinct_eigenvalues_stay_distinct() {
        let a = MatrixOrder::new(diag(&[1.0, 1.0 + 1e-6])).unwrap();
        assert!(a.is_diagonalizable());
        assert_eq!(a.eigenvalues().len(), 2);
    }

    #[test]
    fn identity_and_jordan() {
        let i = MatrixOrder::from_real(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(i.classification(), Classification::Normal);
        assert_eq!(i.eigenvalues().len(), 1);
        assert!(close(&i.projectors()[0].1, &CMat::identity(2, 2), 1e-15));
        let j = MatrixOrder::from_real(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(j.classification(), Classification::JordanOnly);
        assert_eq!(j.jordan_blocks(), &[(c(1.0), 2)]);
    }

    #[test]
    fn larger_jordan_structure() {
        // blocks 2 + 1 at eigenvalue 2, hidden by a similarity
        let j = real_matrix(&[
            vec![2.0, 1.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ])
        .unwrap();
        let s = real_matrix(&[vec![1.0, 2.0, 0.0], vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0]]).unwrap();
        let a = &s * j * s.clone().try_inverse().unwrap();
        let o = MatrixOrder::new(a).map_err(|e| e.to_string()).unwrap();
        assert_eq!(o.classification(), Classification::JordanOnly);
        let mut sizes: Vec<usize> = o.jordan_blocks().iter().map(|b| b.1).collect();
        sizes.sort();
        assert_eq!(sizes, vec![1, 2]);
    }

    #[test]
    fn zero_matrix_rejected() {
        assert!(matches!(
            MatrixOrder::from_real(&[vec![0.0, 0.0], vec![0.0, 0.0]]),
            Err(Error::ZeroMatrix)
        ));
    }

    #[test]
    fn exponential_matches_series() {
        let e = std::f64::consts::E;
        let a = MatrixOrder::from_real(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let ex = a.matrix_function(|z| Ok(z.exp())).unwrap();
        let e3 = e.powi(3);
        assert!((ex[(0, 0)].re - (e3 + e) / 2.0).abs() < 1e-10);
        assert!((ex[(0, 1)].re - (e3 - e) / 2.0).abs() < 1e-10);
        let j = MatrixOrder::from_real(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let ex = j.matrix_function(|z| Ok(z.exp())).unwrap();
        assert!((ex[(0, 0)].re - e).abs() < 1e-10);
        assert!((ex[(0, 1)].re - e).abs() < 1e-8);
        assert!(ex[(1, 0)].norm() < 1e-12);
    }

    #[test]
    fn binomial_of_matrix() {
        let a = MatrixOrder::from_real(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let b2 = matrix_binomial(&a, 2).unwrap();
        assert!(close(&b2, &CMat::from_element(2, 2, c(1.5)), 1e-12));
        assert!(close(&matrix_binomial(&a, 0).unwrap(), &CMat::identity(2, 2), 1e-12));
        assert!(close(&matrix_binomial(&a, 1).unwrap(), a.entries(), 1e-12));
    }

    #[test]
    fn diagonal_differint() {
        let a = MatrixOrder::new(diag(&[0.5, -0.5])).unwrap();
        let f = field::expr(Expr::parse("x1").unwrap());
        let spec = DifferintSpec::new(0, 0.0, 0.0);
        let d = matrix_differint(&a, &f, &spec, &[1.0]).unwrap();
        assert!((d[(0, 0)].re - std::f64::consts::FRAC_2_SQRT_PI).abs() < 1e-7);
        assert!((d[(1, 1)].re - 0.752_252_778).abs() < 1e-7);
        assert!(d[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn complex_eigenvalues_need_closed_form() {
        let a = MatrixOrder::from_real(&[vec![0.5, -0.2], vec![0.2, 0.5]]).unwrap();
        let spec = DifferintSpec::new(0, 0.0, 0.0);
        let f = field::expr(Expr::parse("x1^2").unwrap());
        let d = matrix_differint(&a, &f, &spec, &[1.5]).unwrap();
        assert!(d.iter().all(|z| z.re.is_finite()));
        // a real order matrix acting on a real field gives a real result
        assert!(d.iter().all(|z| z.im.abs() < 1e-12));
        let g = field::expr(Expr::parse("sin(x1)").unwrap());
        assert!(matches!(
            matrix_differint(&a, &g, &spec, &[1.5]),
            Err(Error::UnsupportedOrder(_))
        ));
    }

    #[test]
    fn similarity_and_spectral_assemblies_agree() {
        let a = MatrixOrder::from_real(&[vec![-0.4, 0.1], vec![0.2, -0.6]]).unwrap();
        let b = MatrixOrder::from_real(&[vec![-0.3, 0.0], vec![0.1, -0.5]]).unwrap();
        let f = field::expr(Expr::parse("x1^2 + 1").unwrap());
        let spec = DifferintSpec::new(0, 0.0, 0.0);
        let s1 = compose_matrix_differint(&a, &b, &f, &spec, &[1.0], PairMode::Identities, Assembly::Similarity).unwrap();
        let s2 = compose_matrix_differint(&a, &b, &f, &spec, &[1.0], PairMode::Identities, Assembly::Spectral).unwrap();
        assert!(close(&s1, &s2, 1e-10), "{s1} {s2}");
    }
}
