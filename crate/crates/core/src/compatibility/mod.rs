//! Compatibility operators: from an injectively elliptic `A(D)` build `L(D)`
//! on `E` with `A(ξ)[V] = ker L(ξ)` for every `ξ ≠ 0`.
//!
//! The symbol is `L(ξ) = det M(ξ)·id_E − A(ξ) adj M(ξ) A(ξ)ᵀ` with
//! `M = AᵀA`, a homogeneous polynomial matrix of degree `2·k·dim_v`. Its
//! monomial coefficients are recovered by least-squares interpolation on
//! primitive integer directions and then checked against the direct formula
//! at fresh random frequencies.

mod poly;

pub use poly::PolyMatrix;

use nalgebra::{DMatrix, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::classifier::{require_elliptic, SphereSampler};
use crate::error::{Error, Result};
use crate::operator::{MultiIndex, Operator};
use crate::subspace::{self, rank, singular_values, TolerancePolicy};
use crate::SymbolMatrix;

/// Relative residual allowed between interpolated and direct symbols.
pub const INTERPOLATION_TOL: f64 = 1e-8;
/// Fresh frequencies used to verify an interpolated symbol.
pub const VERIFY_POINTS: usize = 50;
/// Coefficients below this (relative to the symbol scale) mean `L = 0`.
pub const ZERO_OPERATOR_TOL: f64 = 1e-10;

const PRODUCT_TOL: f64 = 1e-8;
const PROJECTOR_TOL: f64 = 1e-7;

/// Outcome of [`build_compatibility`].
#[derive(Clone, Debug)]
pub struct Compatibility {
    pub operator: Operator,
    pub symbol: PolyMatrix,
    pub degree: usize,
    /// `A(ξ)` is onto at every frequency, so `L` is the zero operator.
    pub pointwise_surjective: bool,
    pub nodes: usize,
    /// Worst relative residual at the verification frequencies.
    pub interpolation_residual: f64,
}

/// `adj(M)`, the transposed cofactor matrix.
pub fn adjugate(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    if d == 1 {
        return DMatrix::from_element(1, 1, 1.0);
    }
    let mut adj = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let minor = m.clone().remove_row(i).remove_column(j);
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            adj[(j, i)] = sign * minor.determinant();
        }
    }
    adj
}

/// `L(ξ)` from the closed formula, together with `det M(ξ)`.
pub fn direct_symbol(op: &Operator, xi: &[f64]) -> (DMatrix<f64>, f64) {
    let a = op.symbol(xi);
    let m = a.transpose() * &a;
    let det = m.determinant();
    let l = DMatrix::identity(op.dim_e(), op.dim_e()) * det - &a * adjugate(&m) * a.transpose();
    (l, det)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Primitive integer vectors of `[-r, r]ⁿ` with positive first nonzero
/// entry, i.e. one representative per line through the origin.
fn primitive_directions(n: usize, r: i64) -> Vec<Vec<i64>> {
    let side = (2 * r + 1) as usize;
    let total = side.pow(n as u32);
    let mut out = Vec::new();
    for flat in 0..total {
        let mut v = Vec::with_capacity(n);
        let mut rest = flat;
        for _ in 0..n {
            v.push((rest % side) as i64 - r);
            rest /= side;
        }
        v.reverse();
        let Some(first) = v.iter().find(|&&x| x != 0) else {
            continue;
        };
        if *first < 0 {
            continue;
        }
        if v.iter().fold(0, |g, &x| gcd(g, x)) == 1 {
            out.push(v);
        }
    }
    out
}

/// Interpolation nodes: primitive integer directions in the smallest
/// centred box giving at least twice as many nodes as unknowns.
pub fn interpolation_nodes(n: usize, unknowns: usize) -> Vec<Vec<i64>> {
    let mut r = 1;
    loop {
        let nodes = primitive_directions(n, r);
        if nodes.len() >= 2 * unknowns || n == 1 {
            return nodes;
        }
        r += 1;
    }
}

pub fn build_compatibility(op: &Operator) -> Result<Compatibility> {
    require_elliptic(op)?;

    let n = op.n();
    let dim_e = op.dim_e();
    let degree = 2 * op.order() * op.dim_v();
    let monomials = MultiIndex::all_of_order(n, degree);
    let nodes = interpolation_nodes(n, monomials.len());

    // rows scaled by |ξ|^{-d}: equivalent to sampling on the unit sphere
    let evals: Vec<(Vec<f64>, DMatrix<f64>, f64)> = nodes
        .par_iter()
        .map(|node| {
            let xi: Vec<f64> = node.iter().map(|&x| x as f64).collect();
            let scale = xi
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
                .powi(degree as i32);
            let (l, det) = direct_symbol(op, &xi);
            let row: Vec<f64> = monomials.iter().map(|a| a.monomial(&xi) / scale).collect();
            (row, l / scale, det / scale)
        })
        .collect();
    let symbol_scale = evals.iter().map(|e| e.2.abs()).fold(0.0, f64::max);

    let mut design = DMatrix::from_fn(nodes.len(), monomials.len(), |r, c| evals[r].0[c]);
    let col_norms: Vec<f64> = design.column_iter().map(|c| c.norm()).collect();
    for (j, s) in col_norms.iter().enumerate() {
        design.column_mut(j).scale_mut(1.0 / s);
    }
    let rhs = DMatrix::from_fn(nodes.len(), dim_e * dim_e, |r, c| {
        evals[r].1[(c / dim_e, c % dim_e)]
    });
    let svd = SVD::new(design, true, true);
    let solved = svd
        .solve(&rhs, 1e-14)
        .map_err(|m| Error::precondition("interpolation_solve", m))?;

    let mut coeffs: Vec<(MultiIndex, DMatrix<f64>)> = monomials
        .iter()
        .enumerate()
        .map(|(j, alpha)| {
            let m = DMatrix::from_fn(dim_e, dim_e, |r, c| {
                solved[(j, r * dim_e + c)] / col_norms[j]
            });
            (alpha.clone(), m)
        })
        .collect();
    // least-squares noise on structurally zero coefficients
    let max_coeff = coeffs
        .iter()
        .map(|(_, m)| m.abs().max())
        .fold(0.0, f64::max);
    for (_, m) in coeffs.iter_mut() {
        m.apply(|x| {
            if x.abs() < 1e-13 * max_coeff {
                *x = 0.0
            }
        });
    }
    let symbol = PolyMatrix::new(n, degree, dim_e, dim_e, coeffs.clone());

    let biggest = coeffs.iter().map(|(_, m)| m.norm()).fold(0.0, f64::max);
    let pointwise_surjective = biggest < ZERO_OPERATOR_TOL * symbol_scale.max(f64::MIN_POSITIVE);
    let name = format!("compat({})", op.name().unwrap_or("operator"));

    // verification against the direct formula
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de);
    let mut worst = (0.0f64, vec![0.0; n]);
    for _ in 0..VERIFY_POINTS {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let xi: Vec<f64> = v.iter().map(|x| x / norm).collect();
        let (direct, det) = direct_symbol(op, &xi);
        let recovered = if pointwise_surjective {
            DMatrix::zeros(dim_e, dim_e)
        } else {
            symbol.eval(&xi)
        };
        let denom = direct.norm().max(det.abs());
        let r = (recovered - &direct).norm() / denom;
        if r > worst.0 || r.is_nan() {
            worst = (r, xi);
        }
    }
    if !(worst.0 <= INTERPOLATION_TOL) {
        return Err(Error::InterpolationResidual {
            residual: worst.0,
            xi: worst.1,
        });
    }

    let operator = if pointwise_surjective {
        Operator::zero(n, degree, dim_e, dim_e, Some(name))
    } else {
        Operator::new(n, degree, dim_e, dim_e, coeffs, Some(name))?
    };
    Ok(Compatibility {
        operator,
        symbol,
        degree,
        pointwise_surjective,
        nodes: nodes.len(),
        interpolation_residual: worst.0,
    })
}

/// Worst-case residuals of the identity `A(ξ)[V] = ker L(ξ)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub trials: usize,
    /// `max ‖L(ξ)A(ξ)‖ / (1 + ‖L(ξ)‖‖A(ξ)‖)`.
    pub product_residual: f64,
    /// Frequencies where `rank L ≠ dim_e − rank A`; `None` when `L` maps
    /// into a different space and the rank check does not apply.
    pub rank_mismatches: Option<usize>,
    /// `max ‖P_{ker L(ξ)} − P_{im A(ξ)}‖`.
    pub projector_distance: f64,
    pub passed: bool,
}

fn op_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn verify_compatibility(
    a: &Operator,
    l: &Operator,
    trials: usize,
    seed: u64,
) -> Result<CompatibilityReport> {
    if l.dim_v() != a.dim_e() || l.n() != a.n() {
        return Err(Error::DimensionMismatch(format!(
            "L acts on R^{} over R^{} but A maps into R^{} over R^{}",
            l.dim_v(),
            l.n(),
            a.dim_e(),
            a.n()
        )));
    }
    let pol = TolerancePolicy::default();
    let same_target = l.dim_e() == a.dim_e();
    let sampler = SphereSampler::new(a.n(), seed)
        .with_strategy(crate::classifier::SamplingStrategy::UniformRandom)
        .with_count(trials.max(1));
    let dirs = sampler.round(0);
    let per: Vec<(f64, bool, f64)> = dirs
        .par_iter()
        .map(|xi| {
            let am = a.symbol(xi);
            let lm = l.symbol(xi);
            let product = op_norm(&(&lm * &am)) / (1.0 + op_norm(&lm) * op_norm(&am));
            let rank_ok = !same_target || rank(&lm, &pol) + rank(&am, &pol) == a.dim_e();
            let ker = subspace::kernel(&SymbolMatrix::new(xi.clone(), lm), &pol);
            let im = subspace::image(&SymbolMatrix::new(xi.clone(), am), &pol);
            let dist = op_norm(&(ker.projector() - im.projector()));
            (product, rank_ok, dist)
        })
        .collect();
    let product_residual = per.iter().map(|p| p.0).fold(0.0, f64::max);
    let projector_distance = per.iter().map(|p| p.2).fold(0.0, f64::max);
    let rank_mismatches = same_target.then(|| per.iter().filter(|p| !p.1).count());
    let passed = product_residual <= PRODUCT_TOL
        && projector_distance <= PROJECTOR_TOL
        && rank_mismatches.unwrap_or(0) == 0;
    Ok(CompatibilityReport {
        trials: dirs.len(),
        product_residual,
        rank_mismatches,
        projector_distance,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn op(d: &str) -> Operator {
        catalog::from_descriptor(d).unwrap()
    }

    #[test]
    fn adjugate_of_small_matrices() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            adjugate(&m),
            DMatrix::from_row_slice(2, 2, &[4.0, -2.0, -3.0, 1.0])
        );
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 1.0, 1.0, 3.0, 0.0, 0.0, 1.0, 4.0]);
        let prod = &m * adjugate(&m);
        let det = m.determinant();
        assert!((prod - DMatrix::identity(3, 3) * det).norm() < 1e-12);
    }

    #[test]
    fn primitive_directions_are_distinct_lines() {
        let d = primitive_directions(2, 2);
        assert_eq!(d.len(), 8);
        assert!(d.contains(&vec![1, -2]));
        assert!(!d.contains(&vec![2, 2]));
        assert!(!d.contains(&vec![-1, 0]));
    }

    #[test]
    fn gradient_compatibility_is_rotation_projector() {
        let c = build_compatibility(&op("grad:n=2")).unwrap();
        assert_eq!(c.degree, 2);
        assert!(!c.pointwise_surjective);
        let expect = [
            (vec![2, 0], [0.0, 0.0, 0.0, 1.0]),
            (vec![1, 1], [0.0, -1.0, -1.0, 0.0]),
            (vec![0, 2], [1.0, 0.0, 0.0, 0.0]),
        ];
        for (alpha, m) in expect {
            let got = c.symbol.coeff(&MultiIndex::new(alpha)).unwrap();
            let want = DMatrix::from_row_slice(2, 2, &m);
            assert!((got - want).abs().max() <= 1e-9);
        }
        // direct projector oracle at 20 random frequencies
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let xi: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let r2 = xi[0] * xi[0] + xi[1] * xi[1];
            let x = nalgebra::DVector::from_column_slice(&xi);
            let oracle = DMatrix::identity(2, 2) * r2 - &x * x.transpose();
            assert!((c.symbol.eval(&xi) - oracle).norm() <= 1e-12 * r2);
        }
    }

    #[test]
    fn laplacian_gives_zero_operator() {
        let c = build_compatibility(&op("laplacian:n=2")).unwrap();
        assert!(c.pointwise_surjective);
        assert!(c.operator.is_zero());
        assert_eq!(c.operator.order(), 4);
    }

    #[test]
    fn non_elliptic_input_is_refused() {
        assert!(matches!(
            build_compatibility(&op("divergence:n=2")),
            Err(Error::MarginTooSmall { .. })
        ));
    }

    #[test]
    fn gradient_3d_kernel_is_frequency_line() {
        let c = build_compatibility(&op("dk_scalar:n=3,k=1")).unwrap();
        let pol = TolerancePolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let xi: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
            let ker =
                subspace::kernel(&SymbolMatrix::new(xi.clone(), c.operator.symbol(&xi)), &pol);
            assert_eq!(ker.dim(), 1);
            let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
            let unit: Vec<f64> = xi.iter().map(|x| x / norm).collect();
            assert!(ker.residual(&unit) < 1e-10);
        }
    }

    #[test]
    fn built_and_external_compatibility_checks() {
        let a = op("sym_grad:n=2");
        let built = build_compatibility(&a).unwrap();
        let r = verify_compatibility(&a, &built.operator, 100, 1).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.rank_mismatches, Some(0));

        let sv = op("saint_venant:n=2");
        let r = verify_compatibility(&a, &sv, 100, 1).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.rank_mismatches, None);

        let r = verify_compatibility(&op("grad:n=2"), &op("curl2:n=2"), 100, 1).unwrap();
        assert!(r.passed, "{r:?}");
    }

    fn symbolic_compatibility(a: &Operator) -> PolyMatrix {
        let ap = PolyMatrix::from_operator(a);
        let m = &ap.transpose() * &ap;
        let det = m.determinant();
        let id = PolyMatrix::constant(a.n(), DMatrix::identity(a.dim_e(), a.dim_e()));
        &(&det * &id) - &(&(&ap * &m.adjugate()) * &ap.transpose())
    }

    #[test]
    fn interpolation_matches_symbolic_expansion() {
        for d in [
            "grad:n=3",
            "sym_grad:n=2",
            "hodge:n=3,m=1",
            "dbar_power:j=2",
            "hodge:n=3,m=2",
        ] {
            let a = op(d);
            let exact = symbolic_compatibility(&a);
            let built = build_compatibility(&a).unwrap();
            assert_eq!(built.degree, exact.degree(), "{d}");
            let scale = exact
                .terms()
                .map(|(_, m)| m.abs().max())
                .fold(0.0, f64::max)
                .max(1.0);
            for alpha in MultiIndex::all_of_order(a.n(), built.degree) {
                let got = built
                    .symbol
                    .coeff(&alpha)
                    .cloned()
                    .unwrap_or_else(|| DMatrix::zeros(a.dim_e(), a.dim_e()));
                let want = exact
                    .coeff(&alpha)
                    .cloned()
                    .unwrap_or_else(|| DMatrix::zeros(a.dim_e(), a.dim_e()));
                assert!((got - want).abs().max() <= 1e-8 * scale, "{d} {alpha:?}");
            }
        }
    }

    #[test]
    fn symbol_is_homogeneous_and_kernel_projector_scaled() {
        // L(ξ)/det M(ξ) is the orthogonal projector onto the cokernel of A(ξ)
        let a = op("sym_grad:n=3");
        let c = build_compatibility(&a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let xi: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
            let l = c.symbol.eval(&xi);
            let t = 1.7;
            let xt: Vec<f64> = xi.iter().map(|x| t * x).collect();
            let lt = c.symbol.eval(&xt);
            assert!(
                (lt - &l * t.powi(c.degree as i32)).norm()
                    <= 1e-9 * l.norm() * t.powi(c.degree as i32)
            );
            let (_, det) = direct_symbol(&a, &xi);
            let q = &l / det;
            assert!((&q * &q - &q).norm() < 1e-8);
            assert!((&q - q.transpose()).norm() < 1e-8);
        }
    }

    #[test]
    fn verification_rejects_shape_mismatch() {
        assert!(verify_compatibility(&op("grad:n=2"), &op("curl3:n=3"), 10, 1).is_err());
    }
}
