use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::fields::band_limited;
use super::grid::{GridField, Spectrum};
use crate::classifier::require_elliptic;
use crate::classifier::SphereSampler;
use crate::error::{Error, Result};
use crate::operator::Operator;
use crate::subspace::{pseudo_inverse, singular_values, TolerancePolicy};

/// `(2πi)^k`.
pub fn two_pi_i_pow(k: usize) -> Complex64 {
    Complex64::new(0.0, 2.0 * PI).powu(k as u32)
}

/// Applies `û(ξ) ↦ M(ξ) û(ξ)` frequency by frequency. `m` receives the
/// integer frequency, the input fibre and the output fibre. Modes on the
/// Nyquist boundary are set to zero so real fields stay real.
pub fn apply_multiplier<F>(spec: &Spectrum, out_dim: usize, m: F) -> Spectrum
where
    F: Fn(&[f64], &[Complex64], &mut [Complex64]) + Sync,
{
    let grid = *spec.grid();
    let total = grid.len();
    let in_dim = spec.dim();
    let fibres: Vec<Vec<Complex64>> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut out = vec![Complex64::new(0.0, 0.0); out_dim];
            if !grid.is_nyquist(flat) {
                let input: Vec<Complex64> = (0..in_dim).map(|c| spec.at(c, flat)).collect();
                m(&grid.frequency(flat), &input, &mut out);
            }
            out
        })
        .collect();
    let mut result = Spectrum::zeros(grid, out_dim);
    for (flat, fibre) in fibres.into_iter().enumerate() {
        for (c, z) in fibre.into_iter().enumerate() {
            result.set(c, flat, z);
        }
    }
    result
}

fn real_times(m: &DMatrix<f64>, v: &[Complex64], out: &mut [Complex64]) {
    for (r, slot) in out.iter_mut().enumerate() {
        *slot = (0..m.ncols()).map(|c| v[c] * m[(r, c)]).sum();
    }
}

fn check_field_for(op: &Operator, u: &GridField) -> Result<()> {
    if u.dim() != op.dim_v() || u.grid().n() != op.n() {
        return Err(Error::DimensionMismatch(format!(
            "operator acts on R^{} fields over R^{}, got R^{} over R^{}",
            op.dim_v(),
            op.n(),
            u.dim(),
            u.grid().n()
        )));
    }
    Ok(())
}

/// Spectrum of `A(D)u`: multiplier `(2πi)^k A(ξ)`.
pub fn operator_spectrum(op: &Operator, spec: &Spectrum) -> Spectrum {
    let factor = two_pi_i_pow(op.order());
    apply_multiplier(spec, op.dim_e(), |xi, v, out| {
        real_times(&op.symbol(xi), v, out);
        out.iter_mut().for_each(|z| *z *= factor);
    })
}

pub fn apply_operator(op: &Operator, u: &GridField) -> Result<GridField> {
    check_field_for(op, u)?;
    operator_spectrum(op, &Spectrum::forward(u)).inverse()
}

/// Applies an operator on scalars to every component of `u`; component
/// `c·dim_e + j` of the result is `(A(D)u_c)_j`.
pub fn apply_componentwise(op: &Operator, u: &GridField) -> Result<GridField> {
    if op.dim_v() != 1 || u.grid().n() != op.n() {
        return Err(Error::DimensionMismatch(format!(
            "componentwise application needs a scalar operator over R^{}",
            u.grid().n()
        )));
    }
    let spec = Spectrum::forward(u);
    let factor = two_pi_i_pow(op.order());
    let e = op.dim_e();
    apply_multiplier(&spec, u.dim() * e, |xi, v, out| {
        let a = op.symbol(xi);
        for (c, vc) in v.iter().enumerate() {
            for j in 0..e {
                out[c * e + j] = vc * a[(j, 0)] * factor;
            }
        }
    })
    .inverse()
}

/// Multi-index `(i₁, …, i_ℓ)` stored at position `slot` of a full `n^ℓ` tensor.
fn tensor_indices(n: usize, l: usize, mut slot: usize) -> Vec<usize> {
    let mut idx = vec![0; l];
    for s in idx.iter_mut().rev() {
        *s = slot % n;
        slot /= n;
    }
    idx
}

/// Spectrum of `D^ℓ u`; component `c·n^ℓ + (i₁…i_ℓ)` holds `∂_{i₁}…∂_{i_ℓ}u_c`.
pub fn derivative_spectrum(spec: &Spectrum, l: usize) -> Spectrum {
    if l == 0 {
        return spec.clone();
    }
    let n = spec.grid().n();
    let block = n.pow(l as u32);
    let slots: Vec<Vec<usize>> = (0..block).map(|s| tensor_indices(n, l, s)).collect();
    apply_multiplier(spec, spec.dim() * block, |xi, v, out| {
        let d: Vec<Complex64> = xi
            .iter()
            .map(|&x| Complex64::new(0.0, 2.0 * PI * x))
            .collect();
        for (s, idx) in slots.iter().enumerate() {
            let m: Complex64 = idx.iter().map(|&i| d[i]).product();
            for (c, vc) in v.iter().enumerate() {
                out[c * block + s] = m * vc;
            }
        }
    })
}

pub fn derivative_tensor(u: &GridField, l: usize) -> Result<GridField> {
    if l == 0 {
        return Ok(u.clone());
    }
    derivative_spectrum(&Spectrum::forward(u), l).inverse()
}

/// `(hⁿ Σ |u|ᵖ)^{1/p}` with the Euclidean fibre norm; `p = ∞` gives the
/// largest fibre norm.
pub fn lp_norm(u: &GridField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::precondition(
            "lp_exponent",
            format!("need p >= 1, got {p}"),
        ));
    }
    let total = u.grid().len();
    let fibre_norms = (0..total).into_par_iter().map(|flat| {
        (0..u.dim())
            .map(|c| u.values()[c * total + flat].powi(2))
            .sum::<f64>()
            .sqrt()
    });
    if p.is_infinite() {
        return Ok(fibre_norms.reduce(|| 0.0, f64::max));
    }
    // fixed-order sum for schedule independence
    let powers: Vec<f64> = fibre_norms.map(|r| r.powf(p)).collect();
    let sum: f64 = powers.iter().sum();
    Ok((u.grid().cell_volume() * sum).powf(1.0 / p))
}

/// Relative `L²` discrepancy between `Dᵏu` computed directly and through
/// `F(Dᵏu)(ξ) = ξ^{⊗k} ⊗ A(ξ)†[F(A(D)u)(ξ)]`.
pub fn reconstruction_check(op: &Operator, u: &GridField) -> Result<f64> {
    check_field_for(op, u)?;
    require_elliptic(op)?;
    let k = op.order();
    let n = op.n();
    let spec = Spectrum::forward(u);
    let direct = derivative_spectrum(&spec, k);
    let source = operator_spectrum(op, &spec);
    let block = n.pow(k as u32);
    let slots: Vec<Vec<usize>> = (0..block).map(|s| tensor_indices(n, k, s)).collect();
    let tol = TolerancePolicy::default().rank_rel_tol;
    let via = apply_multiplier(&source, op.dim_v() * block, |xi, f, out| {
        if xi.iter().all(|&x| x == 0.0) {
            return;
        }
        let Ok(pinv) = pseudo_inverse(&op.symbol(xi), tol) else {
            return;
        };
        let mut w = vec![Complex64::new(0.0, 0.0); op.dim_v()];
        real_times(&pinv, f, &mut w);
        for (s, idx) in slots.iter().enumerate() {
            let m: f64 = idx.iter().map(|&i| xi[i]).product();
            for (c, wc) in w.iter().enumerate() {
                out[c * block + s] = wc * m;
            }
        }
    });
    let diff: f64 = direct
        .coeffs()
        .iter()
        .zip(via.coeffs())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let norm = direct.energy();
    if norm == 0.0 {
        return Ok(diff.sqrt());
    }
    Ok((diff / norm).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct P2Check {
    /// Largest `‖Dᵏu‖₂ / ‖A(D)u‖₂` over the random fields.
    pub measured_max_ratio: f64,
    /// Largest `‖A(ω)†‖` over sampled unit directions.
    pub bound: f64,
    pub trials: usize,
}

impl P2Check {
    pub fn passed(&self) -> bool {
        self.measured_max_ratio <= self.bound * (1.0 + 1e-6)
    }
}

/// Frequencies with every coordinate in `[−band, band]` used by the random
/// band-limited fields of the `p = 2` check.
pub const P2_BAND: usize = 6;

/// Parseval-sharp constant at `p = 2`. The bound samples the sphere and
/// every lattice direction the random fields can excite.
pub fn p2_sharp_check<R: Rng>(
    op: &Operator,
    grid_size: usize,
    trials: usize,
    rng: &mut R,
) -> Result<P2Check> {
    require_elliptic(op)?;
    let grid = super::TorusGrid::new(op.n(), grid_size)?;
    let band = P2_BAND.min(grid_size / 2 - 1);
    let mut directions = SphereSampler::new(op.n(), rng.random())
        .with_count(512)
        .round(0);
    let b = band as i64;
    let side = (2 * b + 1) as usize;
    for flat in 0..side.pow(op.n() as u32) {
        let mut rest = flat;
        let mut v = Vec::with_capacity(op.n());
        for _ in 0..op.n() {
            v.push((rest % side) as f64 - b as f64);
            rest /= side;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            directions.push(v.iter().map(|x| x / norm).collect());
        }
    }
    let bound = directions
        .par_iter()
        .map(|w| {
            let s = singular_values(&op.symbol(w));
            1.0 / s.last().copied().unwrap_or(0.0)
        })
        .reduce(|| 0.0, f64::max);
    let mut measured = 0.0f64;
    for _ in 0..trials {
        let u = band_limited(grid, op.dim_v(), band, rng);
        let spec = Spectrum::forward(&u);
        let num = derivative_spectrum(&spec, op.order()).energy().sqrt();
        let den = operator_spectrum(op, &spec).energy().sqrt();
        if den == 0.0 {
            return Err(Error::ZeroDenominator);
        }
        measured = measured.max(num / den);
    }
    Ok(P2Check {
        measured_max_ratio: measured,
        bound,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::lab::TorusGrid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn op(d: &str) -> Operator {
        catalog::from_descriptor(d).unwrap()
    }

    fn max_abs_diff(a: &GridField, b: &GridField) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    fn sine(grid: TorusGrid) -> GridField {
        GridField::from_fn(grid, 1, |x, out| out[0] = (2.0 * PI * x[0]).sin())
    }

    #[test]
    fn gradient_of_a_sine() {
        let g = TorusGrid::new(2, 32).unwrap();
        let du = apply_operator(&op("grad:n=2"), &sine(g)).unwrap();
        let want = GridField::from_fn(g, 2, |x, out| {
            out[0] = 2.0 * PI * (2.0 * PI * x[0]).cos();
            out[1] = 0.0;
        });
        assert!(max_abs_diff(&du, &want) <= 1e-10);
    }

    #[test]
    fn laplacian_of_a_sine() {
        let g = TorusGrid::new(2, 32).unwrap();
        let lu = apply_operator(&op("laplacian:n=2"), &sine(g)).unwrap();
        let want = sine(g).scaled(-4.0 * PI * PI);
        assert!(max_abs_diff(&lu, &want) <= 1e-10);
    }

    #[test]
    fn gradient_twice_is_second_derivative() {
        let g = TorusGrid::new(2, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = band_limited(g, 1, 5, &mut rng);
        let grad = op("grad:n=2");
        let first = apply_operator(&grad, &u).unwrap();
        let second = apply_componentwise(&grad, &first).unwrap();
        let hess = apply_operator(&op("dk_scalar:n=2,k=2"), &u).unwrap();
        let scale = hess.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max_abs_diff(&second, &hess) <= 1e-10 * scale.max(1.0));
        let tensor = derivative_tensor(&u, 2).unwrap();
        assert!(max_abs_diff(&tensor, &hess) <= 1e-10 * scale.max(1.0));
    }

    #[test]
    fn derivative_tensor_of_cosines() {
        let g = TorusGrid::new(2, 16).unwrap();
        let u = GridField::from_fn(g, 1, |x, out| {
            out[0] = (2.0 * PI * (x[0] + 2.0 * x[1])).cos()
        });
        assert_eq!(derivative_tensor(&u, 0).unwrap(), u);
        let d1 = derivative_tensor(&u, 1).unwrap();
        let want = GridField::from_fn(g, 2, |x, out| {
            let s = -(2.0 * PI * (x[0] + 2.0 * x[1])).sin() * 2.0 * PI;
            out[0] = s;
            out[1] = 2.0 * s;
        });
        assert!(max_abs_diff(&d1, &want) <= 1e-10);
        // ∂₂∂₂ u = −16π² u
        let d2 = derivative_tensor(&u, 2).unwrap();
        let want = u.scaled(-16.0 * PI * PI);
        let got = GridField::new(g, 1, d2.component(3).to_vec()).unwrap();
        assert!(max_abs_diff(&got, &want) <= 1e-9);
    }

    #[test]
    fn lp_norms() {
        let g = TorusGrid::new(2, 16).unwrap();
        let c = GridField::from_fn(g, 1, |_, out| out[0] = -3.0);
        assert!((lp_norm(&c, 2.0).unwrap() - 3.0).abs() < 1e-14);
        assert!((lp_norm(&c, f64::INFINITY).unwrap() - 3.0).abs() < 1e-14);
        let v = GridField::from_fn(g, 2, |x, out| {
            out[0] = 3.0 * x[0];
            out[1] = 4.0 * x[0];
        });
        assert!(
            (lp_norm(&v.scaled(2.0), 1.5).unwrap() - 2.0 * lp_norm(&v, 1.5).unwrap()).abs() < 1e-13
        );
        assert!(lp_norm(&v, 0.5).is_err());
    }

    #[test]
    fn reconstruction_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = TorusGrid::new(2, 64).unwrap();
        for d in [
            "grad:n=2",
            "sym_grad:n=2",
            "laplacian:n=2",
            "dbar_power:j=2",
        ] {
            let a = op(d);
            let u = band_limited(g, a.dim_v(), 8, &mut rng);
            assert!(reconstruction_check(&a, &u).unwrap() <= 1e-8, "{d}");
        }
        let zero = GridField::zeros(g, 1);
        assert_eq!(reconstruction_check(&op("grad:n=2"), &zero).unwrap(), 0.0);
        assert!(matches!(
            reconstruction_check(&op("divergence:n=2"), &GridField::zeros(g, 2)),
            Err(Error::MarginTooSmall { .. })
        ));
    }

    #[test]
    fn p2_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in ["grad:n=2", "laplacian:n=2"] {
            let r = p2_sharp_check(&op(d), 32, 5, &mut rng).unwrap();
            assert!((r.bound - 1.0).abs() <= 1e-9, "{d}: {r:?}");
            assert!(r.passed());
        }
        let r = p2_sharp_check(&op("hodge:n=3,m=1"), 16, 3, &mut rng).unwrap();
        assert!((r.bound - 1.0).abs() <= 1e-9);
        assert!(r.passed());
    }

    #[test]
    fn parseval_for_operator_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = TorusGrid::new(2, 32).unwrap();
        let u = band_limited(g, 2, 6, &mut rng);
        let a = op("sym_grad:n=2");
        let au = apply_operator(&a, &u).unwrap();
        let spec = operator_spectrum(&a, &Spectrum::forward(&u));
        let l2 = lp_norm(&au, 2.0).unwrap();
        assert!((l2 * l2 - spec.energy()).abs() <= 1e-10 * l2 * l2);
    }
}
