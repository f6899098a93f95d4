//! Graded fractional differential forms.
//!
//! A form carries an order signature, a list of blocks `(order, p)`, and
//! coefficients keyed by flattened index lists: the first `p_1` indices belong
//! to the first block, and so on. Within a block indices strictly increase;
//! two differentials of the same order and coordinate annihilate.

use crate::error::{Error, Result};
use crate::field::{self, FieldRef};
use crate::special::choose;
use serde::Serialize;
use std::collections::BTreeMap;

/// Orders closer than this are the same block.
pub const ORDER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Block {
    pub order: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderSignature {
    pub blocks: Vec<Block>,
    pub n: usize,
}

fn same_order(a: f64, b: f64) -> bool {
    (a - b).abs() <= ORDER_TOL * a.abs().max(b.abs()).max(1.0)
}

impl OrderSignature {
    pub fn new(blocks: &[(f64, usize)], n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("ambient dimension must be positive".into()));
        }
        for (i, &(v, p)) in blocks.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::UnsupportedOrder(format!("{v}")));
            }
            if p > n {
                return Err(Error::BlockTooLarge { p, n });
            }
            if blocks[..i].iter().any(|&(w, _)| same_order(v, w)) {
                return Err(Error::Invalid(format!("order {v} appears in two blocks")));
            }
        }
        Ok(OrderSignature {
            blocks: blocks
                .iter()
                .map(|&(order, multiplicity)| Block { order, multiplicity })
                .collect(),
            n,
        })
    }

    /// Number of differentials in a term.
    pub fn degree(&self) -> usize {
        self.blocks.iter().map(|b| b.multiplicity).sum()
    }

    pub fn total_order(&self) -> f64 {
        self.blocks.iter().map(|b| b.order * b.multiplicity as f64).sum()
    }

    /// Dimension of the space of forms with this signature: prod C(n, p_i).
    pub fn dim(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| choose(self.n, b.multiplicity))
            .product()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.blocks.len() + 1);
        let mut at = 0;
        out.push(0);
        for b in &self.blocks {
            at += b.multiplicity;
            out.push(at);
        }
        out
    }

    fn same_blocks(&self, other: &Self) -> bool {
        self.n == other.n
            && self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| same_order(a.order, b.order) && a.multiplicity == b.multiplicity)
    }

    fn position(&self, order: f64) -> Option<usize> {
        self.blocks.iter().position(|b| same_order(b.order, order))
    }

    /// All canonical keys, lexicographic by block.
    pub fn keys(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for b in &self.blocks {
            let combos = combinations(self.n, b.multiplicity);
            let mut next = Vec::with_capacity(out.len() * combos.len());
            for prefix in &out {
                for c in &combos {
                    let mut k = prefix.clone();
                    k.extend_from_slice(c);
                    next.push(k);
                }
            }
            out = next;
        }
        out
    }
}

/// Increasing k-subsets of 0..n.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Sorts `items` by key, returning the permutation parity (+1/-1), or 0 when
/// two items share a key.
fn sort_with_sign<T: Ord + Copy>(items: &mut [T]) -> i32 {
    let mut sign = 1;
    // insertion sort: each swap is a transposition
    for i in 1..items.len() {
        let mut j = i;
        while j > 0 && items[j - 1] > items[j] {
            items.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if items.windows(2).any(|w| w[0] == w[1]) {
        0
    } else {
        sign
    }
}

/// Coefficient ring of a form.
pub trait Coefficient: Clone + Send + Sync {
    fn zero() -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn scale(&self, k: f64) -> Self;
}

impl Coefficient for f64 {
    fn zero() -> Self {
        0.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn scale(&self, k: f64) -> Self {
        self * k
    }
}

impl Coefficient for FieldRef {
    fn zero() -> Self {
        field::constant(0.0)
    }
    fn is_zero(&self) -> bool {
        field::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        field::sum(self, other)
    }
    fn mul(&self, other: &Self) -> Self {
        field::product(self, other)
    }
    fn scale(&self, k: f64) -> Self {
        field::scale(self, k)
    }
}

#[derive(Debug, Clone)]
pub struct FracForm<C> {
    signature: OrderSignature,
    terms: BTreeMap<Vec<usize>, C>,
}

impl<C: Coefficient> FracForm<C> {
    pub fn zero(signature: OrderSignature) -> Self {
        FracForm {
            signature,
            terms: BTreeMap::new(),
        }
    }

    /// Single basis element `coef * dx_{indices}` (0-based indices).
    pub fn basis(signature: OrderSignature, indices: &[usize], coef: C) -> Result<Self> {
        let mut f = Self::zero(signature);
        f.add_term(indices, coef)?;
        Ok(f)
    }

    pub fn signature(&self) -> &OrderSignature {
        &self.signature
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<usize>, &C)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, key: &[usize]) -> Option<&C> {
        self.terms.get(key)
    }

    /// Adds `coef * dx_{indices}`, sorting each block and absorbing the sign.
    pub fn add_term(&mut self, indices: &[usize], coef: C) -> Result<()> {
        let sig = &self.signature;
        if indices.len() != sig.degree() {
            return Err(Error::SignatureMismatch);
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= sig.n) {
            return Err(Error::AmbientMismatch(bad + 1, sig.n));
        }
        let offsets = sig.offsets();
        let mut key = indices.to_vec();
        let mut sign = 1;
        for w in offsets.windows(2) {
            sign *= sort_with_sign(&mut key[w[0]..w[1]]);
        }
        if sign == 0 || coef.is_zero() {
            return Ok(());
        }
        let c = coef.scale(sign as f64);
        let merged = match self.terms.get(&key) {
            Some(old) => old.add(&c),
            None => c,
        };
        if merged.is_zero() {
            self.terms.remove(&key);
        } else {
            self.terms.insert(key, merged);
        }
        Ok(())
    }

    pub fn scale(&self, k: f64) -> Self {
        let mut out = Self::zero(self.signature.clone());
        if k != 0.0 {
            for (key, c) in &self.terms {
                out.terms.insert(key.clone(), c.scale(k));
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.signature.same_blocks(&other.signature) {
            return Err(Error::SignatureMismatch);
        }
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_term(k, c.clone())?;
        }
        Ok(out)
    }

    /// Exterior product. Blocks of equal order merge into the left factor's
    /// block; other blocks of `beta` are appended in order.
    pub fn wedge(&self, beta: &Self) -> Result<Self> {
        let (sa, sb) = (&self.signature, &beta.signature);
        if sa.n != sb.n {
            return Err(Error::AmbientMismatch(sa.n, sb.n));
        }
        let mut blocks: Vec<(f64, usize)> = sa.blocks.iter().map(|b| (b.order, b.multiplicity)).collect();
        let mut target = Vec::with_capacity(sb.blocks.len());
        for b in &sb.blocks {
            match blocks.iter().position(|&(v, _)| same_order(v, b.order)) {
                Some(i) => {
                    blocks[i].1 += b.multiplicity;
                    target.push(i);
                }
                None => {
                    blocks.push((b.order, b.multiplicity));
                    target.push(blocks.len() - 1);
                }
            }
        }
        let mut out = Self::zero(OrderSignature::new(&blocks, sa.n)?);
        let oa = sa.offsets();
        let ob = sb.offsets();
        for (ka, ca) in &self.terms {
            for (kb, cb) in &beta.terms {
                let mut items: Vec<(usize, usize)> = Vec::with_capacity(ka.len() + kb.len());
                for (blk, w) in oa.windows(2).enumerate() {
                    items.extend(ka[w[0]..w[1]].iter().map(|&i| (blk, i)));
                }
                for (blk, w) in ob.windows(2).enumerate() {
                    items.extend(kb[w[0]..w[1]].iter().map(|&i| (target[blk], i)));
                }
                let sign = sort_with_sign(&mut items);
                if sign == 0 {
                    continue;
                }
                let key: Vec<usize> = items.iter().map(|&(_, i)| i).collect();
                out.add_term(&key, ca.mul(cb).scale(sign as f64))?;
            }
        }
        Ok(out)
    }

    /// The same form written over a permutation of its blocks.
    pub fn reorder_blocks(&self, target: &OrderSignature) -> Result<Self> {
        let sig = &self.signature;
        if sig.n != target.n || sig.blocks.len() != target.blocks.len() {
            return Err(Error::SignatureMismatch);
        }
        let mut map = Vec::with_capacity(sig.blocks.len());
        for b in &sig.blocks {
            let i = target.position(b.order).ok_or(Error::SignatureMismatch)?;
            if target.blocks[i].multiplicity != b.multiplicity {
                return Err(Error::SignatureMismatch);
            }
            map.push(i);
        }
        let offsets = sig.offsets();
        let mut out = Self::zero(target.clone());
        for (k, c) in &self.terms {
            let mut items: Vec<(usize, usize)> = Vec::with_capacity(k.len());
            for (blk, w) in offsets.windows(2).enumerate() {
                items.extend(k[w[0]..w[1]].iter().map(|&i| (map[blk], i)));
            }
            let sign = sort_with_sign(&mut items);
            let key: Vec<usize> = items.iter().map(|&(_, i)| i).collect();
            out.add_term(&key, c.scale(sign as f64))?;
        }
        Ok(out)
    }

    /// Hodge dual. Each block of `p` indices maps to its increasing
    /// complement with the sign of the permutation (I, K) of (1..n), scaled by
    /// `1 / J(order)` of the block when a Jacobian is supplied.
    pub fn hodge_with(&self, jacobian: Option<&dyn Fn(f64) -> f64>) -> Result<Self> {
        let sig = &self.signature;
        let n = sig.n;
        let blocks: Vec<(f64, usize)> = sig
            .blocks
            .iter()
            .map(|b| (b.order, n - b.multiplicity))
            .collect();
        let out_sig = OrderSignature::new(&blocks, n)?;
        let mut factor = 1.0;
        if let Some(j) = jacobian {
            for b in &sig.blocks {
                factor /= j(b.order);
            }
        }
        let offsets = sig.offsets();
        let mut out = Self::zero(out_sig);
        for (k, c) in &self.terms {
            let mut key = Vec::with_capacity(out.signature.degree());
            let mut sign = 1;
            for w in offsets.windows(2) {
                let block = &k[w[0]..w[1]];
                let comp: Vec<usize> = (0..n).filter(|i| !block.contains(i)).collect();
                let mut perm: Vec<usize> = block.iter().chain(comp.iter()).copied().collect();
                sign *= sort_with_sign(&mut perm);
                key.extend(comp);
            }
            out.add_term(&key, c.scale(sign as f64 * factor))?;
        }
        Ok(out)
    }

    pub fn hodge(&self) -> Result<Self> {
        self.hodge_with(None)
    }
}

impl FracForm<f64> {
    /// Euclidean inner product: sum of coefficient products over keys.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        if !self.signature.same_blocks(&other.signature) {
            return Err(Error::SignatureMismatch);
        }
        Ok(self
            .terms
            .iter()
            .filter_map(|(k, a)| other.terms.get(k).map(|b| a * b))
            .sum())
    }

    /// Inner product in a curvilinear chart. `inverse_metric(order)` returns
    /// `g^{ij}` for differentials of that order; each block contributes the
    /// determinant of the minor of `g^{ij}` selected by the two index sets.
    pub fn inner_with_metric(&self, other: &Self, inverse_metric: &dyn Fn(f64) -> Vec<Vec<f64>>) -> Result<f64> {
        if !self.signature.same_blocks(&other.signature) {
            return Err(Error::SignatureMismatch);
        }
        let offsets = self.signature.offsets();
        let metrics: Vec<Vec<Vec<f64>>> = self.signature.blocks.iter().map(|b| inverse_metric(b.order)).collect();
        let mut acc = 0.0;
        for (ka, a) in &self.terms {
            for (kb, b) in &other.terms {
                let mut w = 1.0;
                for (blk, o) in offsets.windows(2).enumerate() {
                    let g = &metrics[blk];
                    let rows = &ka[o[0]..o[1]];
                    let cols = &kb[o[0]..o[1]];
                    let minor: Vec<Vec<f64>> = rows.iter().map(|&i| cols.iter().map(|&j| g[i][j]).collect()).collect();
                    w *= det(&minor);
                    if w == 0.0 {
                        break;
                    }
                }
                acc += a * b * w;
            }
        }
        Ok(acc)
    }

    pub fn max_abs_difference(&self, other: &Self) -> Result<f64> {
        let diff = self.add(&other.scale(-1.0))?;
        Ok(diff.terms.values().fold(0.0, |m: f64, v| m.max(v.abs())))
    }
}

impl FracForm<FieldRef> {
    /// Coefficients evaluated at a point.
    pub fn at(&self, p: &[f64]) -> Result<FracForm<f64>> {
        let mut out = FracForm::zero(self.signature.clone());
        for (k, c) in &self.terms {
            out.add_term(k, c.eval(p)?)?;
        }
        Ok(out)
    }
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    if n == 0 {
        return 1.0;
    }
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut d = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap(piv, col);
            d = -d;
        }
        d *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    d
}

/// `**alpha = sign * alpha`: the product of (-1)^(p(n-p)) over blocks.
pub fn double_hodge_sign(signature: &OrderSignature) -> i32 {
    let n = signature.n;
    signature
        .blocks
        .iter()
        .map(|b| if (b.multiplicity * (n - b.multiplicity)) % 2 == 0 { 1 } else { -1 })
        .product()
}

#[derive(Debug, Clone, Serialize)]
pub struct TermJson {
    pub indices: Vec<usize>,
    pub coefficient: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FormJson {
    pub signature: Vec<Block>,
    pub n: usize,
    pub terms: Vec<TermJson>,
}

impl From<&FracForm<f64>> for FormJson {
    fn from(f: &FracForm<f64>) -> Self {
        FormJson {
            signature: f.signature.blocks.clone(),
            n: f.signature.n,
            terms: f
                .terms
                .iter()
                .map(|(k, c)| TermJson {
                    indices: k.iter().map(|i| i + 1).collect(),
                    coefficient: *c,
                })
                .collect(),
        }
    }
}

/// A form in F(v, 2, n): a superposition over order splits `v1 + (v - v1)`,
/// discretized at the midpoints `v (k + 1/2) / M`, `M` even, so that no node
/// falls on the excluded diagonal `v1 = v/2`.
#[derive(Debug, Clone)]
pub struct SpectrumForm {
    v: f64,
    n: usize,
    block: usize,
    nodes: Vec<f64>,
    parts: Vec<FracForm<f64>>,
}

impl SpectrumForm {
    /// Blocks `dx_i^{v1} ^ dx_j^{v - v1}` with coefficients `coef(v1, i, j)`
    /// (0-based indices).
    pub fn from_fn(v: f64, n: usize, nodes: usize, coef: impl Fn(f64, usize, usize) -> f64) -> Result<Self> {
        if !(v > 0.0) {
            return Err(Error::Invalid(format!("spectrum total order {v} must be positive")));
        }
        if nodes == 0 || nodes % 2 != 0 {
            return Err(Error::Invalid(format!("spectrum node count {nodes} must be even")));
        }
        let mut grid = Vec::with_capacity(nodes);
        let mut parts = Vec::with_capacity(nodes);
        for k in 0..nodes {
            let v1 = v * (k as f64 + 0.5) / nodes as f64;
            let sig = OrderSignature::new(&[(v1, 1), (v - v1, 1)], n)?;
            let mut form = FracForm::zero(sig);
            for i in 0..n {
                for j in 0..n {
                    form.add_term(&[i, j], coef(v1, i, j))?;
                }
            }
            grid.push(v1);
            parts.push(form);
        }
        Ok(SpectrumForm {
            v,
            n,
            block: 1,
            nodes: grid,
            parts,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn parts(&self) -> &[FracForm<f64>] {
        &self.parts
    }

    pub fn block_multiplicity(&self) -> usize {
        self.block
    }

    fn compatible(&self, other: &Self) -> Result<()> {
        if self.n != other.n
            || self.block != other.block
            || self.nodes.len() != other.nodes.len()
            || !same_order(self.v, other.v)
        {
            return Err(Error::SignatureMismatch);
        }
        Ok(())
    }

    /// Midpoint rule over v1 of the per-node inner products.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.compatible(other)?;
        let w = self.v / self.nodes.len() as f64;
        let mut acc = 0.0;
        for (a, b) in self.parts.iter().zip(&other.parts) {
            acc += w * a.inner(b)?;
        }
        Ok(acc)
    }

    /// Per-node Hodge dual; `jacobian(order)` supplies `J(order)` in a chart.
    pub fn hodge_with(&self, jacobian: Option<&dyn Fn(f64) -> f64>) -> Result<Self> {
        let parts = self
            .parts
            .iter()
            .map(|p| p.hodge_with(jacobian))
            .collect::<Result<Vec<_>>>()?;
        Ok(SpectrumForm {
            v: self.v,
            n: self.n,
            block: self.n - self.block,
            nodes: self.nodes.clone(),
            parts,
        })
    }

    pub fn hodge(&self) -> Result<Self> {
        self.hodge_with(None)
    }

    pub fn max_abs_difference(&self, other: &Self) -> Result<f64> {
        self.compatible(other)?;
        let mut m: f64 = 0.0;
        for (a, b) in self.parts.iter().zip(&other.parts) {
            m = m.max(a.max_abs_difference(b)?);
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(blocks: &[(f64, usize)], n: usize) -> OrderSignature {
        OrderSignature::new(blocks, n).unwrap()
    }

    fn one(s: &OrderSignature, idx: &[usize]) -> FracForm<f64> {
        FracForm::basis(s.clone(), idx, 1.0).unwrap()
    }

    #[test]
    fn dimensions() {
        assert_eq!(sig(&[(0.5, 1)], 5).dim(), 5);
        assert_eq!(sig(&[(0.5, 2)], 4).dim(), 6);
        assert_eq!(sig(&[(0.5, 2), (0.7, 1)], 3).dim(), 9);
        assert_eq!(sig(&[(0.1, 1), (0.2, 1), (0.3, 1)], 4).dim(), 64);
    }

    #[test]
    fn repeated_differential_vanishes() {
        let s = sig(&[(0.5, 1)], 3);
        let a = one(&s, &[0]);
        assert!(a.wedge(&a).unwrap().is_empty());
    }

    #[test]
    fn antisymmetry_of_one_forms() {
        let s = sig(&[(0.5, 1)], 3);
        let ab = one(&s, &[0]).wedge(&one(&s, &[1])).unwrap();
        let ba = one(&s, &[1]).wedge(&one(&s, &[0])).unwrap();
        assert_eq!(ab.get(&[0, 1]), Some(&1.0));
        assert_eq!(ba.get(&[0, 1]), Some(&-1.0));
    }

    #[test]
    fn hodge_basis_duals_in_three_dimensions() {
        let s = sig(&[(0.5, 1)], 3);
        let d = one(&s, &[0]).hodge().unwrap();
        assert_eq!(d.get(&[1, 2]), Some(&1.0));
        let s2 = sig(&[(0.5, 2)], 3);
        let d = one(&s2, &[0, 1]).hodge().unwrap();
        assert_eq!(d.get(&[2]), Some(&1.0));
        let d = one(&s, &[1]).hodge().unwrap();
        assert_eq!(d.get(&[0, 2]), Some(&-1.0));
    }

    #[test]
    fn two_block_hodge() {
        let s = sig(&[(0.3, 1), (0.8, 1)], 2);
        let d = one(&s, &[0, 0]).hodge().unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.get(&[1, 1]), Some(&1.0));
        assert_eq!(double_hodge_sign(&s), 1);
        assert_eq!(double_hodge_sign(&sig(&[(0.5, 1)], 2)), -1);
        assert_eq!(double_hodge_sign(&sig(&[(0.5, 1)], 3)), 1);
    }

    #[test]
    fn block_too_large() {
        assert!(matches!(
            OrderSignature::new(&[(0.5, 4)], 3),
            Err(Error::BlockTooLarge { p: 4, n: 3 })
        ));
    }

    #[test]
    fn inner_products() {
        let s = sig(&[(0.5, 1)], 2);
        assert_eq!(one(&s, &[0]).inner(&one(&s, &[1])).unwrap(), 0.0);
        assert_eq!(one(&s, &[0]).inner(&one(&s, &[0])).unwrap(), 1.0);
        let s2 = sig(&[(0.3, 1), (0.7, 1)], 2);
        let a = FracForm::basis(s2, &[0, 1], 3.0).unwrap();
        assert_eq!(a.inner(&a).unwrap(), 9.0);
        let other = sig(&[(0.3, 1)], 2);
        assert!(matches!(a.inner(&one(&other, &[0])), Err(Error::SignatureMismatch)));
    }

    #[test]
    fn identity_metric_matches_euclidean() {
        let s = sig(&[(0.4, 2), (0.9, 1)], 3);
        let mut a = FracForm::zero(s.clone());
        let mut b = FracForm::zero(s.clone());
        for (i, k) in s.keys().iter().enumerate() {
            a.add_term(k, i as f64 + 1.0).unwrap();
            b.add_term(k, 0.5 - i as f64).unwrap();
        }
        let eye = |_: f64| (0..3).map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let e = a.inner(&b).unwrap();
        let m = a.inner_with_metric(&b, &eye).unwrap();
        assert!((e - m).abs() < 1e-12);
    }

    #[test]
    fn spectrum_inner_products() {
        let a = SpectrumForm::from_fn(1.0, 2, 64, |_, i, j| if (i, j) == (0, 1) { 1.0 } else { 0.0 }).unwrap();
        assert!((a.inner(&a).unwrap() - 1.0).abs() < 1e-14);
        let b = SpectrumForm::from_fn(1.0, 2, 64, |v1, i, j| if (i, j) == (0, 1) { v1 } else { 0.0 }).unwrap();
        assert!((b.inner(&b).unwrap() - 1.0 / 3.0).abs() < 1e-4);
        let c = SpectrumForm::from_fn(1.0, 2, 64, |_, i, j| if (i, j) == (1, 0) { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(a.inner(&c).unwrap(), 0.0);
        assert!(a.nodes().iter().all(|&v| v != 0.5));
        assert!(SpectrumForm::from_fn(1.0, 2, 7, |_, _, _| 0.0).is_err());
    }

    #[test]
    fn spectrum_hodge() {
        let one_node = SpectrumForm::from_fn(1.0, 2, 2, |_, i, j| if (i, j) == (0, 1) { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(one_node.nodes()[0], 0.25);
        let d = one_node.hodge().unwrap();
        // epsilon^{12} epsilon^{21} = -1
        assert_eq!(d.parts()[0].get(&[1, 0]), Some(&-1.0));
        let a = SpectrumForm::from_fn(1.0, 3, 8, |v1, i, j| v1 * (i as f64 + 1.0) - j as f64).unwrap();
        let dd = a.hodge().unwrap().hodge().unwrap();
        assert_eq!(dd.max_abs_difference(&a).unwrap(), 0.0);
        let z = SpectrumForm::from_fn(1.0, 2, 4, |_, _, _| 0.0).unwrap();
        assert!(z.hodge().unwrap().parts().iter().all(|p| p.is_empty()));
    }

    fn arb_form(n: usize) -> impl Strategy<Value = FracForm<f64>> {
        let orders = [0.25, 0.5, 0.75];
        (prop::collection::vec(0usize..=2, 1..=2), prop::collection::vec(-3i32..=3, 16)).prop_filter_map(
            "degree",
            move |(mults, coefs)| {
                let blocks: Vec<(f64, usize)> = mults
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| (orders[i], p.min(n)))
                    .collect();
                let s = OrderSignature::new(&blocks, n).ok()?;
                let mut f = FracForm::zero(s.clone());
                for (k, c) in s.keys().iter().zip(coefs) {
                    f.add_term(k, c as f64).unwrap();
                }
                Some(f)
            },
        )
    }

    proptest! {
        #[test]
        fn graded_commutativity(a in arb_form(3), b in arb_form(3)) {
            let ab = a.wedge(&b);
            // more than n differentials of one order: no such signature
            prop_assume!(!matches!(ab, Err(Error::BlockTooLarge { .. })));
            let ab = ab.unwrap();
            let ba = b.wedge(&a).unwrap().reorder_blocks(ab.signature()).unwrap();
            let sign = if (a.signature().degree() * b.signature().degree()) % 2 == 0 { 1.0 } else { -1.0 };
            prop_assert_eq!(ab.max_abs_difference(&ba.scale(sign)).unwrap(), 0.0);
        }

        #[test]
        fn hodge_involution(a in arb_form(4)) {
            let dd = a.hodge().unwrap().hodge().unwrap();
            let s = double_hodge_sign(a.signature()) as f64;
            prop_assert_eq!(dd.max_abs_difference(&a.scale(s)).unwrap(), 0.0);
        }
    }
}
