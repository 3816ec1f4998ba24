//! Tolerance-aware rank, image, kernel, pseudoinverse and subspace
//! intersection for small dense matrices.
//!
//! Rank decisions are relative: a singular value counts as zero when it is
//! below `rank_rel_tol · σ_max`. The zero subspace is a basis with no columns.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::SymbolMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TolerancePolicy {
    pub rank_rel_tol: f64,
    pub intersect_eig_tol: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        TolerancePolicy {
            rank_rel_tol: 1e-9,
            intersect_eig_tol: 1e-9,
        }
    }
}

impl TolerancePolicy {
    pub fn new(rank_rel_tol: f64, intersect_eig_tol: f64) -> Result<Self> {
        for (name, v) in [
            ("rank_rel_tol", rank_rel_tol),
            ("intersect_eig_tol", intersect_eig_tol),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::precondition(
                    "tolerance_range",
                    format!("{name} = {v} must lie in (0, 1)"),
                ));
            }
        }
        Ok(TolerancePolicy {
            rank_rel_tol,
            intersect_eig_tol,
        })
    }
}

/// A linear subspace of `ℝ^ambient_dim` given by an orthonormal basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    ambient_dim: usize,
    basis: DMatrix<f64>,
    tol: f64,
}

impl Subspace {
    pub fn zero(ambient_dim: usize) -> Self {
        Subspace {
            ambient_dim,
            basis: DMatrix::zeros(ambient_dim, 0),
            tol: 0.0,
        }
    }

    pub fn full(ambient_dim: usize) -> Self {
        Subspace {
            ambient_dim,
            basis: DMatrix::identity(ambient_dim, ambient_dim),
            tol: 0.0,
        }
    }

    /// Orthonormal basis of the column span of `m`.
    pub fn spanned_by(m: &DMatrix<f64>, pol: &TolerancePolicy) -> Self {
        column_space(m, pol.rank_rel_tol)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Rank tolerance the subspace was computed under.
    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Orthogonal projector `B Bᵀ`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// `‖(I - P)v‖`, the distance from `v` to the subspace.
    pub fn residual(&self, v: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(v);
        let coeffs = self.basis.transpose() * &v;
        (v - &self.basis * coeffs).norm()
    }
}

/// Column space of `m`; zero matrices give the zero subspace.
fn column_space(m: &DMatrix<f64>, rel_tol: f64) -> Subspace {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Subspace::zero(rows);
    }
    // pad with zero columns so that U is square; range is unchanged
    let padded = if cols < rows {
        let mut p = DMatrix::zeros(rows, rows);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::new(padded, true, false);
    let sigma_max = svd.singular_values.max();
    if sigma_max == 0.0 {
        return Subspace::zero(rows);
    }
    let cutoff = rel_tol * sigma_max;
    let u = svd.u.expect("requested U");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > cutoff)
        .collect();
    let basis = DMatrix::from_fn(rows, keep.len(), |r, c| u[(r, keep[c])]);
    Subspace {
        ambient_dim: rows,
        basis,
        tol: rel_tol,
    }
}

/// Null space of `m`; zero matrices give the full domain.
fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> Subspace {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return Subspace::zero(0);
    }
    // pad with zero rows so that Vᵀ is square; kernel is unchanged
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::new(padded, false, true);
    let sigma_max = svd.singular_values.max();
    if sigma_max == 0.0 {
        return Subspace {
            tol: rel_tol,
            ..Subspace::full(cols)
        };
    }
    let cutoff = rel_tol * sigma_max;
    let v_t = svd.v_t.expect("requested V^T");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= cutoff)
        .collect();
    let basis = DMatrix::from_fn(cols, keep.len(), |r, c| v_t[(keep[c], r)]);
    Subspace {
        ambient_dim: cols,
        basis,
        tol: rel_tol,
    }
}

/// Singular values of `m`, including the structural zeros when `m` has
/// fewer rows than columns. Sorted in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let (rows, cols) = m.shape();
    let mut s: Vec<f64> = if rows == 0 || cols == 0 {
        Vec::new()
    } else {
        SVD::new(m.clone(), false, false)
            .singular_values
            .iter()
            .copied()
            .collect()
    };
    s.resize(cols, 0.0);
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank under the relative cutoff.
pub fn rank(m: &DMatrix<f64>, pol: &TolerancePolicy) -> usize {
    let s = singular_values(m);
    let max = s.first().copied().unwrap_or(0.0);
    if max == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > pol.rank_rel_tol * max).count()
}

/// Image `A(ξ)[V] ⊂ E`.
pub fn image(sm: &SymbolMatrix, pol: &TolerancePolicy) -> Subspace {
    column_space(&sm.matrix, pol.rank_rel_tol)
}

/// Kernel `ker A(ξ) ⊂ V`.
pub fn kernel(sm: &SymbolMatrix, pol: &TolerancePolicy) -> Subspace {
    null_space(&sm.matrix, pol.rank_rel_tol)
}

/// Moore–Penrose inverse `(A*A)⁻¹A*` of an injective symbol, using the
/// default rank tolerance.
pub fn moore_penrose(sm: &SymbolMatrix) -> Result<DMatrix<f64>> {
    moore_penrose_with(sm, &TolerancePolicy::default())
}

pub fn moore_penrose_with(sm: &SymbolMatrix, pol: &TolerancePolicy) -> Result<DMatrix<f64>> {
    pseudo_inverse(&sm.matrix, pol.rank_rel_tol).map_err(|sigma_min| Error::NotInjective {
        xi: sm.xi.clone(),
        sigma_min,
    })
}

/// `(AᵀA)⁻¹Aᵀ`, or `Err(σ_min)` when `A` is not injective under `rel_tol`.
pub(crate) fn pseudo_inverse(
    a: &DMatrix<f64>,
    rel_tol: f64,
) -> std::result::Result<DMatrix<f64>, f64> {
    let s = singular_values(a);
    let max = s.first().copied().unwrap_or(0.0);
    let min = s.last().copied().unwrap_or(0.0);
    if max == 0.0 || min <= rel_tol * max {
        return Err(min);
    }
    let normal = a.transpose() * a;
    let chol = normal.cholesky().ok_or(min)?;
    Ok(chol.solve(&a.transpose()))
}

/// Intersection via the eigenvectors of `P_a + P_b` whose eigenvalue exceeds
/// `2 - intersect_eig_tol`.
pub fn intersect(a: &Subspace, b: &Subspace, pol: &TolerancePolicy) -> Result<Subspace> {
    if a.ambient_dim != b.ambient_dim {
        return Err(Error::DimensionMismatch(format!(
            "cannot intersect subspaces of R^{} and R^{}",
            a.ambient_dim, b.ambient_dim
        )));
    }
    if a.is_zero() || b.is_zero() {
        return Ok(Subspace::zero(a.ambient_dim));
    }
    let sum = a.projector() + b.projector();
    let eig = SymmetricEigen::new(sum);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 2.0 - pol.intersect_eig_tol)
        .collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .total_cmp(&eig.eigenvalues[i])
            .then(i.cmp(&j))
    });
    order.truncate(a.dim().min(b.dim()));
    let basis = DMatrix::from_fn(a.ambient_dim, order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    Ok(Subspace {
        ambient_dim: a.ambient_dim,
        basis,
        tol: pol.intersect_eig_tol,
    })
}

/// `1 - cos θ` for the smallest principal angle between `a` and `b`
/// (`1` when either is zero). Equals `2 - λ_max(P_a + P_b)`.
pub fn angle_gap(a: &Subspace, b: &Subspace) -> f64 {
    if a.is_zero() || b.is_zero() {
        return 1.0;
    }
    let m = a.basis.transpose() * &b.basis;
    let cos_max = singular_values(&m).first().copied().unwrap_or(0.0).min(1.0);
    1.0 - cos_max
}
