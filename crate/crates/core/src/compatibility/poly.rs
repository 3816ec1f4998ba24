use std::collections::BTreeMap;
use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;

use crate::operator::{MultiIndex, Operator};

/// A matrix whose entries are homogeneous polynomials of one degree in
/// `n` variables, stored as matrix coefficients per monomial.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMatrix {
    n: usize,
    degree: usize,
    rows: usize,
    cols: usize,
    coeffs: BTreeMap<MultiIndex, DMatrix<f64>>,
}

impl PolyMatrix {
    /// Panics on shape or degree mismatches; exact zero coefficients are dropped.
    pub fn new(
        n: usize,
        degree: usize,
        rows: usize,
        cols: usize,
        terms: impl IntoIterator<Item = (MultiIndex, DMatrix<f64>)>,
    ) -> Self {
        let mut coeffs: BTreeMap<MultiIndex, DMatrix<f64>> = BTreeMap::new();
        for (alpha, m) in terms {
            assert_eq!(alpha.len(), n, "multi-index length");
            assert_eq!(alpha.order(), degree, "monomial degree");
            assert_eq!(m.shape(), (rows, cols), "coefficient shape");
            match coeffs.get_mut(&alpha) {
                Some(acc) => *acc += m,
                None => {
                    coeffs.insert(alpha, m);
                }
            }
        }
        coeffs.retain(|_, m| m.iter().any(|&x| x != 0.0));
        PolyMatrix {
            n,
            degree,
            rows,
            cols,
            coeffs,
        }
    }

    /// Constant matrix, degree zero.
    pub fn constant(n: usize, m: DMatrix<f64>) -> Self {
        let (r, c) = m.shape();
        PolyMatrix::new(n, 0, r, c, [(MultiIndex::new(vec![0; n]), m)])
    }

    pub fn from_operator(op: &Operator) -> Self {
        PolyMatrix::new(
            op.n(),
            op.order(),
            op.dim_e(),
            op.dim_v(),
            op.terms().iter().map(|(a, m)| (a.clone(), m.clone())),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> Option<&DMatrix<f64>> {
        self.coeffs.get(alpha)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &DMatrix<f64>)> {
        self.coeffs.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, xi: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for (alpha, m) in &self.coeffs {
            out += alpha.monomial(xi) * m;
        }
        out
    }

    pub fn transpose(&self) -> Self {
        PolyMatrix::new(
            self.n,
            self.degree,
            self.cols,
            self.rows,
            self.coeffs.iter().map(|(a, m)| (a.clone(), m.transpose())),
        )
    }

    pub fn scale(&self, c: f64) -> Self {
        PolyMatrix::new(
            self.n,
            self.degree,
            self.rows,
            self.cols,
            self.coeffs.iter().map(|(a, m)| (a.clone(), m * c)),
        )
    }

    /// Entry `(i, j)` as a 1×1 polynomial matrix.
    pub fn entry(&self, i: usize, j: usize) -> Self {
        PolyMatrix::new(
            self.n,
            self.degree,
            1,
            1,
            self.coeffs
                .iter()
                .map(|(a, m)| (a.clone(), DMatrix::from_element(1, 1, m[(i, j)]))),
        )
    }

    /// Determinant of a square polynomial matrix by cofactor expansion.
    pub fn determinant(&self) -> Self {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let d = self.rows;
        if d == 1 {
            return self.clone();
        }
        let mut acc = PolyMatrix::new(self.n, self.degree * d, 1, 1, []);
        for j in 0..d {
            let minor = self.minor(0, j).determinant();
            let term = &self.entry(0, j) * &minor;
            acc = if j % 2 == 0 {
                &acc + &term
            } else {
                &acc - &term
            };
        }
        acc
    }

    /// Adjugate of a square polynomial matrix.
    pub fn adjugate(&self) -> Self {
        assert_eq!(self.rows, self.cols, "adjugate of a non-square matrix");
        let d = self.rows;
        if d == 1 {
            return PolyMatrix::constant(self.n, DMatrix::from_element(1, 1, 1.0));
        }
        let deg = self.degree * (d - 1);
        let mut out: BTreeMap<MultiIndex, DMatrix<f64>> = BTreeMap::new();
        for i in 0..d {
            for j in 0..d {
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                let cof = self.minor(i, j).determinant();
                for (a, m) in cof.coeffs {
                    out.entry(a).or_insert_with(|| DMatrix::zeros(d, d))[(j, i)] +=
                        sign * m[(0, 0)];
                }
            }
        }
        PolyMatrix::new(self.n, deg, d, d, out)
    }

    fn minor(&self, i: usize, j: usize) -> Self {
        PolyMatrix::new(
            self.n,
            self.degree,
            self.rows - 1,
            self.cols - 1,
            self.coeffs
                .iter()
                .map(|(a, m)| (a.clone(), m.clone().remove_row(i).remove_column(j))),
        )
    }
}

fn add_indices(a: &MultiIndex, b: &MultiIndex) -> MultiIndex {
    MultiIndex::new(
        a.entries()
            .iter()
            .zip(b.entries())
            .map(|(x, y)| x + y)
            .collect(),
    )
}

impl Mul for &PolyMatrix {
    type Output = PolyMatrix;

    fn mul(self, rhs: &PolyMatrix) -> PolyMatrix {
        assert_eq!(self.n, rhs.n);
        // a 1×1 factor acts as a scalar
        let left_scalar = self.shape() == (1, 1) && rhs.rows != 1;
        let right_scalar = rhs.shape() == (1, 1) && self.cols != 1;
        let (rows, cols) = if left_scalar {
            rhs.shape()
        } else if right_scalar {
            self.shape()
        } else {
            assert_eq!(self.cols, rhs.rows, "inner dimensions");
            (self.rows, rhs.cols)
        };
        let mut terms = Vec::with_capacity(self.coeffs.len() * rhs.coeffs.len());
        for (a, ma) in &self.coeffs {
            for (b, mb) in &rhs.coeffs {
                let m = if left_scalar {
                    mb * ma[(0, 0)]
                } else if right_scalar {
                    ma * mb[(0, 0)]
                } else {
                    ma * mb
                };
                terms.push((add_indices(a, b), m));
            }
        }
        PolyMatrix::new(self.n, self.degree + rhs.degree, rows, cols, terms)
    }
}

impl Add for &PolyMatrix {
    type Output = PolyMatrix;

    fn add(self, rhs: &PolyMatrix) -> PolyMatrix {
        assert_eq!(
            (self.n, self.degree),
            (rhs.n, rhs.degree),
            "degree mismatch"
        );
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch");
        let terms = self
            .coeffs
            .iter()
            .chain(&rhs.coeffs)
            .map(|(a, m)| (a.clone(), m.clone()));
        PolyMatrix::new(self.n, self.degree, self.rows, self.cols, terms)
    }
}

impl Sub for &PolyMatrix {
    type Output = PolyMatrix;

    fn sub(self, rhs: &PolyMatrix) -> PolyMatrix {
        self + &rhs.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin(n: usize, i: usize) -> PolyMatrix {
        PolyMatrix::new(
            n,
            1,
            1,
            1,
            [(MultiIndex::axis(n, i, 1), DMatrix::from_element(1, 1, 1.0))],
        )
    }

    #[test]
    fn products_expand_binomials() {
        // (x + y)² = x² + 2xy + y²
        let s = &lin(2, 0) + &lin(2, 1);
        let sq = &s * &s;
        assert_eq!(sq.degree(), 2);
        assert_eq!(sq.coeff(&MultiIndex::new(vec![1, 1])).unwrap()[(0, 0)], 2.0);
        assert_eq!(sq.coeff(&MultiIndex::new(vec![2, 0])).unwrap()[(0, 0)], 1.0);
        assert!((sq.eval(&[1.5, -0.5])[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cancellation_removes_terms() {
        let x = lin(3, 2);
        assert!((&x - &x).is_zero());
    }

    #[test]
    fn determinant_and_adjugate_match_numeric() {
        let n = 2;
        let terms = [
            (
                MultiIndex::axis(n, 0, 1),
                DMatrix::from_row_slice(3, 3, &[1., 2., 0., -1., 0., 3., 2., 1., 1.]),
            ),
            (
                MultiIndex::axis(n, 1, 1),
                DMatrix::from_row_slice(3, 3, &[0., 1., 1., 4., -2., 0., 1., 0., 5.]),
            ),
        ];
        let p = PolyMatrix::new(n, 1, 3, 3, terms);
        let xi = [0.7, -1.3];
        let m = p.eval(&xi);
        let det = p.determinant();
        assert_eq!(det.degree(), 3);
        assert!((det.eval(&xi)[(0, 0)] - m.determinant()).abs() < 1e-12);
        let adj = p.adjugate();
        assert!((adj.eval(&xi) - super::super::adjugate(&m)).norm() < 1e-12);
    }
}
