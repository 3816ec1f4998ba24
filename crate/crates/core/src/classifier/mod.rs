//! Sampling-based decisions of injective ellipticity, cancellation and
//! cocancellation, plus the spherical-average test for weak cancellation.
//!
//! A cancellation verdict of `holds` is a certificate: the running
//! intersection of the images `A(ξᵢ)[V]` over finitely many directions is
//! already `{0}`. A `fails` verdict comes with a witness that was validated on
//! fresh directions; when validation does not pass the outcome is
//! `inconclusive`.

mod quadrature;
mod sampler;

pub use quadrature::{gauss_legendre, sphere_area, sphere_rule, SphereRule};
pub use sampler::{SamplingStrategy, SphereSampler};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::Operator;
use crate::subspace::{self, angle_gap, intersect, singular_values, Subspace, TolerancePolicy};

/// Witness validation threshold for `‖(I - P)e‖`.
pub const WITNESS_RESIDUAL_TOL: f64 = 1e-8;
/// Number of fresh directions used to validate a witness.
pub const WITNESS_VALIDATION_DIRECTIONS: usize = 256;
/// Pseudoinverses are refused below this ellipticity margin.
pub const MIN_ELLIPTIC_MARGIN: f64 = 1e-6;
/// Absolute slack added to the quadrature error estimate.
pub const WEAK_CANCELLATION_SLACK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Elliptic,
    Cancelling,
    Cocancelling,
    WeaklyCancelling,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub property: Property,
    pub value: Outcome,
    /// Elliptic: smallest `σ_min` seen. (Co)cancelling: `1 - cos θ` of the
    /// certifying step. Weak cancellation: largest residual.
    pub margin: f64,
    pub witness: Option<Vec<f64>>,
    pub samples_used: usize,
    pub residual: f64,
    pub certified: bool,
    /// Dimension of the running intersection after each round.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<usize>,
}

/// Unit vector of `s` closest to the first coordinate axis with maximal
/// projection: `P e_j / ‖P e_j‖` for the first `j` maximising `P_jj`.
fn canonical_vector(s: &Subspace) -> Vec<f64> {
    let p = s.projector();
    let diag: Vec<f64> = (0..p.nrows()).map(|j| p[(j, j)]).collect();
    let best = diag.iter().cloned().fold(f64::MIN, f64::max);
    let j = diag.iter().position(|&d| d >= best - 1e-9).unwrap_or(0);
    let col = p.column(j);
    let norm = col.norm();
    col.iter().map(|x| x / norm).collect()
}

/// Extra probe directions along the coordinate axes.
fn axis_directions(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            v
        })
        .collect()
}

pub fn check_elliptic(op: &Operator, s: &SphereSampler, pol: &TolerancePolicy) -> Verdict {
    let mut margin = f64::INFINITY;
    let mut used = 0;
    let batches =
        std::iter::once(axis_directions(op.n())).chain((0..s.max_rounds).map(|r| s.round(r)));
    for dirs in batches {
        let svals: Vec<(f64, f64)> = dirs
            .par_iter()
            .map(|xi| {
                let sv = singular_values(&op.symbol(xi));
                (
                    sv.first().copied().unwrap_or(0.0),
                    sv.last().copied().unwrap_or(0.0),
                )
            })
            .collect();
        for (xi, (max, min)) in dirs.iter().zip(svals) {
            used += 1;
            margin = margin.min(min);
            if max == 0.0 || min <= pol.rank_rel_tol * max {
                let a = op.symbol(xi);
                let ker = subspace::kernel(&crate::SymbolMatrix::new(xi.clone(), a.clone()), pol);
                let w = canonical_vector(&ker);
                let aw = &a * nalgebra::DVector::from_column_slice(&w);
                let residual = if max > 0.0 { aw.norm() / max } else { 0.0 };
                return Verdict {
                    property: Property::Elliptic,
                    value: Outcome::Fails,
                    margin,
                    witness: Some(w),
                    samples_used: used,
                    residual,
                    certified: false,
                    trajectory: Vec::new(),
                };
            }
        }
    }
    Verdict {
        property: Property::Elliptic,
        value: Outcome::Holds,
        margin,
        witness: None,
        samples_used: used,
        residual: 0.0,
        certified: false,
        trajectory: Vec::new(),
    }
}

/// Ellipticity margin on a fixed sample set, or [`Error::MarginTooSmall`]
/// when it does not exceed [`MIN_ELLIPTIC_MARGIN`].
pub fn require_elliptic(op: &Operator) -> Result<f64> {
    let sampler = SphereSampler::new(op.n(), 0xc0ffee)
        .with_count(256)
        .with_rounds(2);
    let verdict = check_elliptic(op, &sampler, &TolerancePolicy::default());
    if verdict.margin <= MIN_ELLIPTIC_MARGIN {
        return Err(Error::MarginTooSmall {
            margin: verdict.margin,
        });
    }
    Ok(verdict.margin)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Slice {
    Image,
    Kernel,
}

fn slice_at(op: &Operator, xi: &[f64], which: Slice, pol: &TolerancePolicy) -> Subspace {
    let sm = crate::SymbolMatrix::new(xi.to_vec(), op.symbol(xi));
    match which {
        Slice::Image => subspace::image(&sm, pol),
        Slice::Kernel => subspace::kernel(&sm, pol),
    }
}

fn running_intersection(
    op: &Operator,
    s: &SphereSampler,
    pol: &TolerancePolicy,
    which: Slice,
    property: Property,
) -> Verdict {
    let mut current: Option<Subspace> = None;
    let mut trajectory = Vec::new();
    let mut used = 0;
    for r in 0..s.max_rounds {
        let dirs = s.round(r);
        let slices: Vec<Subspace> = dirs
            .par_iter()
            .map(|xi| slice_at(op, xi, which, pol))
            .collect();
        for slice in slices {
            used += 1;
            let (next, gap) = match current.take() {
                None => (slice, 1.0),
                Some(c) => {
                    let gap = angle_gap(&c, &slice);
                    (
                        intersect(&c, &slice, pol).expect("slices share the ambient space"),
                        gap,
                    )
                }
            };
            if next.is_zero() {
                trajectory.push(0);
                return Verdict {
                    property,
                    value: Outcome::Holds,
                    margin: gap,
                    witness: None,
                    samples_used: used,
                    residual: 0.0,
                    certified: true,
                    trajectory,
                };
            }
            current = Some(next);
        }
        trajectory.push(current.as_ref().map_or(0, Subspace::dim));
    }

    let survivor = current.expect("at least one round is sampled");
    let witness = canonical_vector(&survivor);
    let fresh = s.fresh(WITNESS_VALIDATION_DIRECTIONS);
    let residual = fresh
        .par_iter()
        .map(|xi| slice_at(op, xi, which, pol).residual(&witness))
        .reduce(|| 0.0, f64::max);
    let passed = residual <= WITNESS_RESIDUAL_TOL;
    Verdict {
        property,
        value: if passed {
            Outcome::Fails
        } else {
            Outcome::Inconclusive
        },
        margin: 0.0,
        witness: passed.then_some(witness),
        samples_used: used + fresh.len(),
        residual,
        certified: false,
        trajectory,
    }
}

/// Cancellation: `⋂_ξ A(ξ)[V] = {0}`.
pub fn check_cancelling(op: &Operator, s: &SphereSampler, pol: &TolerancePolicy) -> Verdict {
    running_intersection(op, s, pol, Slice::Image, Property::Cancelling)
}

/// Cocancellation: `⋂_ξ ker L(ξ) = {0}`.
pub fn check_cocancelling(op: &Operator, s: &SphereSampler, pol: &TolerancePolicy) -> Verdict {
    running_intersection(op, s, pol, Slice::Kernel, Property::Cocancelling)
}

/// Result of the spherical-average test for weak cancellation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakCancellation {
    /// `(index of the basis vector e of E, ‖∫ ξ^{⊗(n-k)} ⊗ A†(ξ)e dξ‖)`.
    pub residuals: Vec<(usize, f64)>,
    pub error_estimate: f64,
    pub quad_points: usize,
    pub weakly_cancelling: bool,
}

impl WeakCancellation {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.1).fold(0.0, f64::max)
    }
}

// Integrated tensors, one column per basis vector of E.
fn spherical_average(op: &Operator, rule: &SphereRule, power: usize) -> Result<DMatrix<f64>> {
    let n = op.n();
    let fiber = n.pow(power as u32) * op.dim_v();
    let pol = TolerancePolicy::default();
    let contributions: Vec<Result<DMatrix<f64>>> = rule
        .points
        .par_iter()
        .zip(rule.weights.par_iter())
        .map(|(xi, &w)| {
            let pinv = subspace::pseudo_inverse(&op.symbol(xi), pol.rank_rel_tol).map_err(
                |sigma_min| Error::NotInjective {
                    xi: xi.clone(),
                    sigma_min,
                },
            )?;
            let tensor = tensor_power(xi, power);
            // layout: ξ^{⊗p} index outer, V component inner
            let mut out = DMatrix::zeros(fiber, op.dim_e());
            for (t, &tv) in tensor.iter().enumerate() {
                for v in 0..op.dim_v() {
                    for e in 0..op.dim_e() {
                        out[(t * op.dim_v() + v, e)] = w * tv * pinv[(v, e)];
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut total = DMatrix::zeros(fiber, op.dim_e());
    for c in contributions {
        total += c?;
    }
    Ok(total)
}

/// Entries of `ξ^{⊗p}` in row-major tensor order.
pub fn tensor_power(xi: &[f64], p: usize) -> Vec<f64> {
    let mut t = vec![1.0];
    for _ in 0..p {
        t = t
            .iter()
            .flat_map(|a| xi.iter().map(move |x| a * x))
            .collect();
    }
    t
}

/// Residuals of `∫_{S^{n-1}} ξ^{⊗(n-k)} ⊗ A†(ξ)[e] dξ` for each basis vector `e`.
///
/// Requires `n ≥ k` and an injectively elliptic operator.
pub fn weak_cancellation_residual(op: &Operator, quad_points: usize) -> Result<WeakCancellation> {
    let (n, k) = (op.n(), op.order());
    if n < k {
        return Err(Error::precondition(
            "weak_cancellation_exponent",
            format!("need n >= k for the tensor power n - k (n = {n}, k = {k})"),
        ));
    }
    let power = n - k;
    let q = quad_points.max(2);
    let rule = sphere_rule(n, q, 0x5eed_0f_5e11);
    let fine = spherical_average(op, &rule, power)?;
    let error_estimate = if rule.monte_carlo {
        monte_carlo_error(op, &rule, power)?
    } else {
        let coarse = spherical_average(op, &sphere_rule(n, q.div_ceil(2), 0), power)?;
        (0..op.dim_e())
            .map(|e| (fine.column(e).norm() - coarse.column(e).norm()).abs())
            .fold(0.0, f64::max)
    };
    let residuals: Vec<(usize, f64)> = (0..op.dim_e())
        .map(|e| (e, fine.column(e).norm()))
        .collect();
    let max = residuals.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(WeakCancellation {
        residuals,
        error_estimate,
        quad_points: q,
        weakly_cancelling: max < error_estimate + WEAK_CANCELLATION_SLACK,
    })
}

// Standard error of the paired Monte Carlo estimate, worst basis vector.
fn monte_carlo_error(op: &Operator, rule: &SphereRule, power: usize) -> Result<f64> {
    let pairs = rule.points.len() / 2;
    let area: f64 = rule.weights.iter().sum();
    let mut samples = Vec::with_capacity(pairs);
    for p in 0..pairs {
        let sub = SphereRule {
            points: rule.points[2 * p..2 * p + 2].to_vec(),
            weights: vec![area / 2.0; 2],
            monte_carlo: true,
        };
        samples.push(spherical_average(op, &sub, power)?);
    }
    let mean = samples.iter().fold(
        DMatrix::zeros(samples[0].nrows(), samples[0].ncols()),
        |a, s| a + s,
    ) / pairs as f64;
    let mut worst: f64 = 0.0;
    for e in 0..op.dim_e() {
        let var: f64 = samples
            .iter()
            .map(|s| (s.column(e) - mean.column(e)).norm_squared())
            .sum::<f64>()
            / (pairs.max(2) - 1) as f64;
        worst = worst.max((var / pairs as f64).sqrt());
    }
    Ok(worst)
}

/// Weak cancellation as a verdict; `margin` is the largest residual.
pub fn check_weakly_cancelling(op: &Operator, quad_points: usize) -> Result<Verdict> {
    let w = weak_cancellation_residual(op, quad_points)?;
    Ok(Verdict {
        property: Property::WeaklyCancelling,
        value: if w.weakly_cancelling {
            Outcome::Holds
        } else {
            Outcome::Fails
        },
        margin: w.max_residual(),
        witness: None,
        samples_used: w.quad_points,
        residual: w.error_estimate,
        certified: false,
        trajectory: Vec::new(),
    })
}
