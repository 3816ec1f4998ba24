//! Homogeneous constant-coefficient differential operators and their symbols.
//!
//! An operator `A(D) = Σ_{|α|=k} A_α ∂^α` from `V = ℝ^dim_v` to `E = ℝ^dim_e`
//! on `ℝⁿ` is stored as a map from multi-indices to `dim_e × dim_v`
//! coefficient matrices. Its symbol at a frequency `ξ` is the real matrix
//! `Σ A_α ξ^α`; the `(2πi)^k` factor of the Fourier transform is left out and
//! applied only by the spectral lab.

pub mod bases;
pub mod catalog;
pub mod io;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prefix marking a catalog descriptor in operator references.
pub const CATALOG_PREFIX: &str = "catalog:";

/// Resolves `catalog:NAME[:params]` against the catalog and anything else
/// as a path to an operator file.
pub fn resolve(reference: &str) -> Result<Operator> {
    match reference.strip_prefix(CATALOG_PREFIX) {
        Some(descriptor) => catalog::from_descriptor(descriptor),
        None => io::read_operator(reference),
    }
}

/// Exponent vector `α = (α₁, …, α_n)` of a monomial `ξ^α`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    /// The multi-index `k·e_i` of length `n`.
    pub fn axis(n: usize, i: usize, k: u32) -> Self {
        let mut entries = vec![0; n];
        entries[i] = k;
        MultiIndex(entries)
    }

    /// Multi-index counting how often each axis appears in `axes`.
    pub fn from_axes(n: usize, axes: &[usize]) -> Self {
        let mut entries = vec![0; n];
        for &a in axes {
            entries[a] += 1;
        }
        MultiIndex(entries)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `|α| = Σ αᵢ`.
    pub fn order(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    /// `ξ^α = Π ξᵢ^{αᵢ}`.
    pub fn monomial(&self, xi: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(xi)
            .map(|(&a, &x)| x.powi(a as i32))
            .product()
    }

    /// All multi-indices of length `n` and order `k`, in decreasing
    /// lexicographic order (`(k,0,…)` first).
    pub fn all_of_order(n: usize, k: usize) -> Vec<MultiIndex> {
        fn rec(n: usize, left: usize, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            if prefix.len() + 1 == n {
                prefix.push(left as u32);
                out.push(MultiIndex(prefix.clone()));
                prefix.pop();
                return;
            }
            for a in (0..=left).rev() {
                prefix.push(a as u32);
                rec(n, left - a, prefix, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        if n == 0 {
            return out;
        }
        rec(n, k, &mut Vec::with_capacity(n), &mut out);
        out
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// A homogeneous constant-coefficient operator of order `k` from `ℝ^dim_v`
/// to `ℝ^dim_e` on `ℝⁿ`.
///
/// Values are immutable once constructed. The only operator allowed to have
/// all coefficients zero is the one built by [`Operator::zero`].
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    n: usize,
    k: usize,
    dim_v: usize,
    dim_e: usize,
    terms: BTreeMap<MultiIndex, DMatrix<f64>>,
    name: Option<String>,
}

impl Operator {
    /// Builds an operator, summing repeated multi-indices.
    pub fn new(
        n: usize,
        k: usize,
        dim_v: usize,
        dim_e: usize,
        terms: impl IntoIterator<Item = (MultiIndex, DMatrix<f64>)>,
        name: Option<String>,
    ) -> Result<Self> {
        if n == 0 || k == 0 || dim_v == 0 || dim_e == 0 {
            return Err(Error::InvalidOperator(format!(
                "n, k, dim_v and dim_e must be positive (got n={n}, k={k}, dim_v={dim_v}, dim_e={dim_e})"
            )));
        }
        let mut map: BTreeMap<MultiIndex, DMatrix<f64>> = BTreeMap::new();
        for (alpha, matrix) in terms {
            if alpha.len() != n {
                return Err(Error::InvalidOperator(format!(
                    "multi-index {alpha} has length {} but n = {n}",
                    alpha.len()
                )));
            }
            if alpha.order() != k {
                return Err(Error::InvalidOperator(format!(
                    "multi-index {alpha} has order {} but k = {k}",
                    alpha.order()
                )));
            }
            if matrix.shape() != (dim_e, dim_v) {
                return Err(Error::InvalidOperator(format!(
                    "coefficient of {alpha} has shape {:?}, expected ({dim_e}, {dim_v})",
                    matrix.shape()
                )));
            }
            if matrix.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidOperator(format!(
                    "coefficient of {alpha} has non-finite entries"
                )));
            }
            match map.get_mut(&alpha) {
                Some(existing) => *existing += matrix,
                None => {
                    map.insert(alpha, matrix);
                }
            }
        }
        map.retain(|_, m| m.iter().any(|&x| x != 0.0));
        if map.is_empty() {
            return Err(Error::InvalidOperator(
                "at least one coefficient matrix must be nonzero".into(),
            ));
        }
        Ok(Operator {
            n,
            k,
            dim_v,
            dim_e,
            terms: map,
            name,
        })
    }

    /// The canonical zero operator, used when a compatibility operator
    /// degenerates (pointwise surjective symbols).
    pub fn zero(n: usize, k: usize, dim_v: usize, dim_e: usize, name: Option<String>) -> Self {
        Operator {
            n,
            k,
            dim_v,
            dim_e,
            terms: BTreeMap::new(),
            name,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn dim_v(&self) -> usize {
        self.dim_v
    }

    pub fn dim_e(&self) -> usize {
        self.dim_e
    }

    pub fn terms(&self) -> &BTreeMap<MultiIndex, DMatrix<f64>> {
        &self.terms
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    /// `c·A(D)`; `c` must be nonzero.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if c == 0.0 || !c.is_finite() {
            return Err(Error::InvalidOperator(format!("cannot scale by {c}")));
        }
        let mut out = self.clone();
        for m in out.terms.values_mut() {
            *m *= c;
        }
        Ok(out)
    }

    /// Sum of two operators with identical `(n, k, dim_v, dim_e)`.
    pub fn try_add(&self, other: &Operator) -> Result<Self> {
        if (self.n, self.k, self.dim_v, self.dim_e) != (other.n, other.k, other.dim_v, other.dim_e)
        {
            return Err(Error::DimensionMismatch(
                "operators must share n, k, dim_v and dim_e to be added".into(),
            ));
        }
        let terms = self
            .terms
            .iter()
            .chain(other.terms.iter())
            .map(|(a, m)| (a.clone(), m.clone()));
        Operator::new(self.n, self.k, self.dim_v, self.dim_e, terms, None)
    }

    /// Evaluates `A(ξ) = Σ A_α ξ^α`.
    pub fn eval_symbol(&self, xi: &[f64]) -> Result<SymbolMatrix> {
        if xi.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "frequency has length {} but operator acts on R^{}",
                xi.len(),
                self.n
            )));
        }
        Ok(SymbolMatrix {
            xi: xi.to_vec(),
            matrix: self.symbol(xi),
        })
    }

    /// Symbol matrix without the length check; callers guarantee `xi.len() == n`.
    pub(crate) fn symbol(&self, xi: &[f64]) -> DMatrix<f64> {
        debug_assert_eq!(xi.len(), self.n);
        let mut out = DMatrix::zeros(self.dim_e, self.dim_v);
        for (alpha, coeff) in &self.terms {
            let m = alpha.monomial(xi);
            if m != 0.0 {
                out += coeff * m;
            }
        }
        out
    }
}

/// The matrix `A(ξ)` together with the frequency it was evaluated at.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolMatrix {
    pub xi: Vec<f64>,
    pub matrix: DMatrix<f64>,
}

impl SymbolMatrix {
    pub fn new(xi: Vec<f64>, matrix: DMatrix<f64>) -> Self {
        SymbolMatrix { xi, matrix }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_indices_of_order() {
        let all = MultiIndex::all_of_order(3, 2);
        assert_eq!(all.len(), 6);
        assert_eq!(all[0].entries(), &[2, 0, 0]);
        assert_eq!(all[5].entries(), &[0, 0, 2]);
        assert!(all.iter().all(|a| a.order() == 2 && a.len() == 3));
        assert_eq!(MultiIndex::all_of_order(4, 12).len(), 455);
    }

    #[test]
    fn rejects_wrong_order() {
        let r = Operator::new(
            2,
            2,
            1,
            1,
            [(
                MultiIndex::new(vec![1, 0]),
                DMatrix::from_element(1, 1, 1.0),
            )],
            None,
        );
        assert!(matches!(r, Err(Error::InvalidOperator(_))));
    }

    #[test]
    fn rejects_all_zero() {
        let r = Operator::new(
            2,
            1,
            1,
            1,
            [(MultiIndex::new(vec![1, 0]), DMatrix::zeros(1, 1))],
            None,
        );
        assert!(r.is_err());
    }

    #[test]
    fn eval_requires_matching_length() {
        let g = catalog::get("grad", 2, &Default::default()).unwrap();
        assert!(matches!(
            g.eval_symbol(&[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn sum_of_operators_evaluates_to_sum_of_symbols() {
        let g = catalog::get("grad", 2, &Default::default()).unwrap();
        let h = g.scaled(-3.5).unwrap();
        let s = g.try_add(&h).unwrap();
        let xi = [3.0, -2.0];
        let lhs = s.eval_symbol(&xi).unwrap().matrix;
        let rhs = g.eval_symbol(&xi).unwrap().matrix + h.eval_symbol(&xi).unwrap().matrix;
        assert_eq!(lhs, rhs);
    }
}
