//! Coordinate conventions for form-valued and symmetric-matrix-valued spaces.
//!
//! * `Λ^m ℝⁿ` uses the increasing `m`-subsets of `{0, …, n-1}` in
//!   lexicographic order.
//! * Symmetric `n × n` matrices are stored as their upper triangle, row by
//!   row, with off-diagonal entries weighted by `√2` so that the Euclidean
//!   norm of the vector equals the Frobenius norm of the matrix.

use std::f64::consts::SQRT_2;

use nalgebra::DMatrix;

/// Binomial coefficient `C(n, m)` (zero when `m > n`).
pub fn binomial(n: usize, m: usize) -> usize {
    if m > n {
        return 0;
    }
    let m = m.min(n - m);
    (0..m).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Increasing `m`-subsets of `{0, …, n-1}` in lexicographic order.
pub fn form_basis(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, m, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if m <= n {
        rec(0, n, m, &mut Vec::with_capacity(m), &mut out);
    }
    out
}

/// Position of a sorted subset in [`form_basis`].
pub fn form_index(basis: &[Vec<usize>], subset: &[usize]) -> usize {
    basis
        .binary_search_by(|b| b.as_slice().cmp(subset))
        .expect("subset is part of the basis")
}

/// Dimension of the symmetric matrices, `n(n+1)/2`.
pub fn sym_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Upper-triangle index pairs `(i, j)`, `i <= j`, in storage order.
pub fn sym_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect()
}

/// Storage position of the entry `(i, j)` (order of the arguments is irrelevant).
pub fn sym_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // rows before i contribute n + (n-1) + … + (n-i+1) entries
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

/// Weight of the entry `(i, j)` in the stored vector.
pub fn sym_weight(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        SQRT_2
    }
}

/// Packs a symmetric matrix (only the upper triangle is read).
pub fn sym_to_vec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    sym_pairs(n)
        .into_iter()
        .map(|(i, j)| sym_weight(i, j) * m[(i, j)])
        .collect()
}

/// Unpacks a stored vector into the full symmetric matrix.
pub fn vec_to_sym(n: usize, v: &[f64]) -> DMatrix<f64> {
    assert_eq!(v.len(), sym_dim(n));
    let mut m = DMatrix::zeros(n, n);
    for (s, (i, j)) in sym_pairs(n).into_iter().enumerate() {
        let x = v[s] / sym_weight(i, j);
        m[(i, j)] = x;
        m[(j, i)] = x;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(4, 3), 4);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(2, 3), 0);
    }

    #[test]
    fn form_basis_is_lexicographic() {
        let b = form_basis(4, 2);
        assert_eq!(b.len(), 6);
        assert_eq!(b[0], vec![0, 1]);
        assert_eq!(b[1], vec![0, 2]);
        assert_eq!(b[5], vec![2, 3]);
        assert_eq!(form_index(&b, &[1, 3]), 4);
        assert_eq!(form_basis(3, 0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn sym_index_matches_pairs() {
        for n in 1..6 {
            for (s, (i, j)) in sym_pairs(n).into_iter().enumerate() {
                assert_eq!(sym_index(n, i, j), s);
                assert_eq!(sym_index(n, j, i), s);
            }
        }
    }

    #[test]
    fn packing_preserves_frobenius_norm() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, -1.0, 2.0, 0.5, 3.0, -1.0, 3.0, 4.0]);
        let v = sym_to_vec(&m);
        let nv: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((nv - m.norm()).abs() < 1e-14);
        assert!((vec_to_sym(3, &v) - m).norm() < 1e-14);
    }
}
