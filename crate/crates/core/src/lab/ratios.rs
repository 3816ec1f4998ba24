use std::cmp::Ordering;
use std::f64::consts::PI;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fields::{check_resolvable, cutoff, mollifier};
use super::grid::{GridField, Spectrum, TorusGrid};
use super::spectral::{apply_multiplier, apply_operator, derivative_tensor, lp_norm, two_pi_i_pow};
use crate::classifier::require_elliptic;
use crate::error::{Error, Result};
use crate::operator::{catalog, Operator};
use crate::subspace::{pseudo_inverse, TolerancePolicy};

/// Relative tolerance on the kernel constraint `L(D)f = 0`.
pub const KERNEL_TOL: f64 = 1e-8;
/// Relative tolerance on the divergence of rasterised curves.
pub const CURVE_DIVERGENCE_TOL: f64 = 1e-6;
/// The direct Gagliardo double sum is only run on grids up to this size.
pub const MAX_FRACTIONAL_GRID: usize = 48;

fn nonzero(den: f64) -> Result<f64> {
    if den > 0.0 && den.is_finite() {
        Ok(den)
    } else {
        Err(Error::ZeroDenominator)
    }
}

fn order_gap(op: &Operator, l: usize) -> Option<usize> {
    op.order().checked_sub(l)
}

/// `‖D^ℓu‖_q / ‖A(D)u‖₁` with `q = n/(n − (k − ℓ))`.
pub fn sobolev_ratio(op: &Operator, u: &GridField, l: usize) -> Result<f64> {
    let n = op.n();
    let gap = order_gap(op, l)
        .filter(|&g| g > 0 && g < n)
        .ok_or_else(|| {
            Error::precondition(
                "sobolev_exponent",
                format!(
                    "need 0 < k - l < n, got k = {}, l = {l}, n = {n}",
                    op.order()
                ),
            )
        })?;
    let q = n as f64 / (n - gap) as f64;
    let den = nonzero(lp_norm(&apply_operator(op, u)?, 1.0)?)?;
    Ok(lp_norm(&derivative_tensor(u, l)?, q)? / den)
}

/// Singular point of the Hardy weight: the cell centre shifted by half a
/// cell so that no grid point sits on it.
pub fn hardy_centre(grid: &TorusGrid) -> Vec<f64> {
    vec![0.5 + 0.5 * grid.spacing(); grid.n()]
}

/// `∫ |D^ℓu(x)| / |x − x₀|^{k−ℓ} dx / ‖A(D)u‖₁` around [`hardy_centre`].
pub fn hardy_ratio(op: &Operator, u: &GridField, l: usize) -> Result<f64> {
    let n = op.n();
    let gap = order_gap(op, l)
        .filter(|&g| g > 0 && g < n)
        .ok_or_else(|| {
            Error::precondition(
                "hardy_exponent",
                format!(
                    "need 0 < k - l < n, got k = {}, l = {l}, n = {n}",
                    op.order()
                ),
            )
        })?;
    let den = nonzero(lp_norm(&apply_operator(op, u)?, 1.0)?)?;
    let dl = derivative_tensor(u, l)?;
    let grid = *u.grid();
    let x0 = hardy_centre(&grid);
    let terms: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            let r = grid
                .displacement(&grid.point(flat), &x0)
                .iter()
                .map(|d| d * d)
                .sum::<f64>()
                .sqrt();
            let v = dl.fibre(flat).iter().map(|x| x * x).sum::<f64>().sqrt();
            v / r.powi(gap as i32)
        })
        .collect();
    Ok(grid.cell_volume() * terms.iter().sum::<f64>() / den)
}

/// `‖D^ℓu‖_∞ / ‖A(D)u‖₁`, meaningful when `k − ℓ = n`.
pub fn uniform_ratio(op: &Operator, u: &GridField, l: usize) -> Result<f64> {
    if order_gap(op, l) != Some(op.n()) {
        return Err(Error::precondition(
            "uniform_exponent",
            format!(
                "need k - l = n, got k = {}, l = {l}, n = {}",
                op.order(),
                op.n()
            ),
        ));
    }
    let den = nonzero(lp_norm(&apply_operator(op, u)?, 1.0)?)?;
    Ok(lp_norm(&derivative_tensor(u, l)?, f64::INFINITY)? / den)
}

/// `(ΣₓΣ_{y≠x} h²ⁿ |f(y) − f(x)|ᵖ / |y − x|^{n+σp})^{1/p}` with periodic
/// distances.
pub fn gagliardo_seminorm(f: &GridField, sigma: f64, p: f64) -> f64 {
    let grid = *f.grid();
    let total = grid.len();
    let h = grid.spacing();
    let n = grid.n();
    let half = grid.size() / 2;
    let exponent = n as f64 + sigma * p;
    // one job per offset; partial sums collected in offset order
    let partial: Vec<f64> = (1..total)
        .into_par_iter()
        .map(|offset| {
            let shift = grid.index(offset);
            let dist = shift
                .iter()
                .map(|&s| {
                    let d = if s < half {
                        s as f64
                    } else {
                        s as f64 - grid.size() as f64
                    };
                    (d * h).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            let mut acc = 0.0;
            for flat in 0..total {
                let idx = grid.index(flat);
                let moved: Vec<usize> = idx.iter().zip(&shift).map(|(a, b)| a + b).collect();
                let other = grid.flat(&moved);
                let d2: f64 = (0..f.dim())
                    .map(|c| {
                        let t = f.values()[c * total + other] - f.values()[c * total + flat];
                        t * t
                    })
                    .sum();
                acc += d2.sqrt().powf(p);
            }
            acc / dist.powf(exponent)
        })
        .collect();
    (grid.cell_volume().powi(2) * partial.iter().sum::<f64>()).powf(1.0 / p)
}

/// Gagliardo seminorm of `D^ℓu` over `‖A(D)u‖₁`, under `k − n = ℓ + σ − n/p`.
pub fn fractional_ratio(op: &Operator, u: &GridField, l: usize, sigma: f64, p: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma < 1.0) || !(p > 1.0 && p.is_finite()) {
        return Err(Error::precondition(
            "fractional_exponent",
            format!("need 0 < sigma < 1 and 1 < p < inf, got sigma = {sigma}, p = {p}"),
        ));
    }
    let n = op.n() as f64;
    let mismatch = (op.order() as f64 - n) - (l as f64 + sigma - n / p);
    if mismatch.abs() > 1e-12 {
        return Err(Error::precondition(
            "fractional_exponent",
            format!("k - n = l + sigma - n/p fails by {mismatch:e}"),
        ));
    }
    if u.grid().size() > MAX_FRACTIONAL_GRID {
        return Err(Error::precondition(
            "fractional_grid",
            format!(
                "direct double sum limited to N <= {MAX_FRACTIONAL_GRID}, got {}",
                u.grid().size()
            ),
        ));
    }
    let den = nonzero(lp_norm(&apply_operator(op, u)?, 1.0)?)?;
    Ok(gagliardo_seminorm(&derivative_tensor(u, l)?, sigma, p) / den)
}

/// `‖L(ξ)f̂‖ / ‖ |L(ξ)| f̂‖` summed over frequencies; zero for `L(D)f = 0`.
pub fn kernel_residual(l: &Operator, f: &GridField) -> Result<f64> {
    if f.dim() != l.dim_v() || f.grid().n() != l.n() {
        return Err(Error::DimensionMismatch(format!(
            "operator acts on R^{} fields, got R^{}",
            l.dim_v(),
            f.dim()
        )));
    }
    let spec = Spectrum::forward(f);
    let applied = apply_multiplier(&spec, l.dim_e(), |xi, v, out| {
        let m = l.symbol(xi);
        for (r, slot) in out.iter_mut().enumerate() {
            *slot = (0..m.ncols()).map(|c| v[c] * m[(r, c)]).sum();
        }
    });
    let weighted = apply_multiplier(&spec, 1, |xi, v, out| {
        let norm = l.symbol(xi).norm();
        out[0] = Complex64::new(
            norm * v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
            0.0,
        );
    });
    let den = weighted.energy().sqrt();
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(applied.energy().sqrt() / den)
}

/// [`kernel_residual`] for the divergence of an `ℝⁿ`-valued field.
pub fn divergence_residual(f: &GridField) -> f64 {
    let div = catalog::get("divergence", f.grid().n(), &Default::default())
        .expect("divergence is in the catalog");
    kernel_residual(&div, f).unwrap_or(f64::INFINITY)
}

/// `|⟨f, φ⟩| / (‖f‖₁ ‖D^ℓφ‖_{n/ℓ})` for `f` in the kernel of `L(D)`.
pub fn duality_ratio(l_op: &Operator, f: &GridField, phi: &GridField, ell: usize) -> Result<f64> {
    let n = l_op.n();
    if ell == 0 || ell >= n {
        return Err(Error::precondition(
            "duality_exponent",
            format!("need 1 <= l <= n - 1, got l = {ell}, n = {n}"),
        ));
    }
    let residual = kernel_residual(l_op, f)?;
    if !(residual <= KERNEL_TOL) {
        return Err(Error::precondition(
            "duality_kernel",
            format!("f is not annihilated by L(D): relative residual {residual:e}"),
        ));
    }
    let pairing = f.inner(phi)?;
    let den = lp_norm(f, 1.0)? * lp_norm(&derivative_tensor(phi, ell)?, n as f64 / ell as f64)?;
    Ok(pairing.abs() / nonzero(den)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Sobolev,
    Hardy,
    Uniform,
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sobolev" => Ok(Target::Sobolev),
            "hardy" => Ok(Target::Hardy),
            "uniform" => Ok(Target::Uniform),
            other => Err(Error::precondition(
                "target",
                format!("unknown target `{other}`"),
            )),
        }
    }
}

pub fn target_ratio(target: Target, op: &Operator, u: &GridField, l: usize) -> Result<f64> {
    match target {
        Target::Sobolev => sobolev_ratio(op, u, l),
        Target::Hardy => hardy_ratio(op, u, l),
        Target::Uniform => uniform_ratio(op, u, l),
    }
}

/// Approximate solution of `A(D)u = e δ` at scale `ε`, centred in the cell:
/// `û(ξ) = (2πi)^{−k} A(ξ)†e ρ̂_ε(ξ)` and `û(0) = 0`.
pub fn blowup_field(op: &Operator, e: &[f64], grid: TorusGrid, epsilon: f64) -> Result<GridField> {
    if e.len() != op.dim_e() || grid.n() != op.n() {
        return Err(Error::DimensionMismatch(format!(
            "source of length {} for an operator into R^{} over R^{}",
            e.len(),
            op.dim_e(),
            op.n()
        )));
    }
    let rho = Spectrum::forward(&mollifier(grid, &grid.centre(), epsilon)?);
    let factor = two_pi_i_pow(op.order()).inv();
    let tol = TolerancePolicy::default().rank_rel_tol;
    apply_multiplier(&rho, op.dim_v(), |xi, r, out| {
        if xi.iter().all(|&x| x == 0.0) {
            return;
        }
        let Ok(pinv) = pseudo_inverse(&op.symbol(xi), tol) else {
            return;
        };
        for (row, slot) in out.iter_mut().enumerate() {
            let w: f64 = (0..e.len()).map(|c| pinv[(row, c)] * e[c]).sum();
            *slot = r[0] * w * factor;
        }
    })
    .inverse()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlowupPoint {
    pub epsilon: f64,
    pub ratio: f64,
    /// `‖A(D)u_ε − e ρ_ε‖₁ / ‖e ρ_ε‖₁`, the source error from dropping the
    /// zero mode and projecting onto the image of the symbol.
    pub source_perturbation: f64,
}

pub fn blowup_family(
    op: &Operator,
    e: &[f64],
    epsilons: &[f64],
    l: usize,
    target: Target,
    grid_size: usize,
) -> Result<Vec<BlowupPoint>> {
    require_elliptic(op)?;
    if e.iter().all(|&x| x == 0.0) {
        return Err(Error::precondition("witness", "source vector is zero"));
    }
    let grid = TorusGrid::new(op.n(), grid_size)?;
    for &eps in epsilons {
        check_resolvable(&grid, eps)?;
    }
    epsilons
        .par_iter()
        .map(|&epsilon| {
            let u = blowup_field(op, e, grid, epsilon)?;
            let ratio = target_ratio(target, op, &u, l)?;
            let rho = mollifier(grid, &grid.centre(), epsilon)?;
            let values: Vec<f64> = e
                .iter()
                .flat_map(|&ec| rho.values().iter().map(move |r| ec * r))
                .collect();
            let source = GridField::new(grid, e.len(), values)?;
            let au = apply_operator(op, &u)?;
            let perturbation = lp_norm(&au.try_sub(&source)?, 1.0)? / lp_norm(&source, 1.0)?;
            Ok(BlowupPoint {
                epsilon,
                ratio,
                source_perturbation: perturbation,
            })
        })
        .collect()
}

/// Growth of the duality ratio for the non-cocancelling `partial_slice`
/// operator: `f_ε = e₂ρ_ε(· − x₀)` and `φ_ε = e₂ log(1/√(|x − x₀|² + ε²))`
/// times a fixed cutoff, with `ℓ = 1`.
pub fn divfree_witness_growth(
    epsilons: &[f64],
    grid_size: usize,
    x0: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let n = x0.len();
    let l_op = catalog::get("partial_slice", n, &Default::default())?;
    let grid = TorusGrid::new(n, grid_size)?;
    for &eps in epsilons {
        check_resolvable(&grid, eps)?;
    }
    epsilons
        .iter()
        .map(|&eps| {
            let rho = mollifier(grid, x0, eps)?;
            let mut values = vec![0.0; 2 * grid.len()];
            values[grid.len()..].copy_from_slice(rho.values());
            let f = GridField::new(grid, 2, values)?;
            let phi = GridField::from_fn(grid, 2, |x, out| {
                let r2: f64 = grid.displacement(x, x0).iter().map(|d| d * d).sum();
                out[0] = 0.0;
                out[1] = -0.5 * (r2 + eps * eps).ln() * cutoff(r2.sqrt(), 0.1, 0.25);
            });
            Ok((eps, duality_ratio(&l_op, &f, &phi, 1)?))
        })
        .collect()
}

/// Closed or open polygonal curve in `ℝⁿ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyline {
    points: Vec<Vec<f64>>,
}

impl Polyline {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.first().map(Vec::len).unwrap_or(0);
        if points.len() < 2 || n == 0 || points.iter().any(|p| p.len() != n) {
            return Err(Error::precondition(
                "curve",
                "need at least two points of equal positive dimension",
            ));
        }
        Ok(Polyline { points })
    }

    /// Axis-aligned square traversed counterclockwise in the first two
    /// coordinates of `ℝ²`.
    pub fn square(centre: [f64; 2], side: f64) -> Self {
        let (cx, cy) = (centre[0], centre[1]);
        let s = side / 2.0;
        let corners = [
            [cx - s, cy - s],
            [cx + s, cy - s],
            [cx + s, cy + s],
            [cx - s, cy + s],
            [cx - s, cy - s],
        ];
        Polyline {
            points: corners.iter().map(|c| c.to_vec()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn is_closed(&self) -> bool {
        self.points.first() == self.points.last()
    }

    pub fn reversed(&self) -> Self {
        Polyline {
            points: self.points.iter().rev().cloned().collect(),
        }
    }

    pub fn length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| {
                w[0].iter()
                    .zip(&w[1])
                    .map(|(a, b)| (b - a).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum()
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// `∫₀¹ e^{−iθt} dt`.
fn segment_phase(theta: f64) -> Complex64 {
    if theta.abs() < 1e-4 {
        let t2 = theta * theta;
        Complex64::new(1.0 - t2 / 6.0, -theta / 2.0 + theta * t2 / 24.0)
    } else {
        (Complex64::new(1.0, 0.0) - Complex64::new(0.0, -theta).exp()) / Complex64::new(0.0, theta)
    }
}

/// The tangent measure `t·H¹` of a closed curve mollified at scale `ε`,
/// computed exactly in frequency space segment by segment. Segments are
/// summed in a fixed order with a sign for their orientation, so reversing
/// the curve negates the field exactly.
pub fn tangent_measure(curve: &Polyline, grid: TorusGrid, epsilon: f64) -> Result<GridField> {
    if !curve.is_closed() {
        return Err(Error::precondition(
            "closed_curve",
            "first and last points differ",
        ));
    }
    if curve.dim() != grid.n() {
        return Err(Error::DimensionMismatch(format!(
            "curve in R^{} on a grid over R^{}",
            curve.dim(),
            grid.n()
        )));
    }
    if curve
        .points()
        .iter()
        .flatten()
        .any(|&x| !(x > 0.0 && x < 1.0))
    {
        return Err(Error::precondition(
            "curve_inside",
            "curve leaves the open unit cell",
        ));
    }
    check_resolvable(&grid, epsilon)?;
    let mut segments: Vec<(Vec<f64>, Vec<f64>, f64)> = curve
        .points()
        .windows(2)
        .filter(|w| w[0] != w[1])
        .map(|w| match lex_cmp(&w[0], &w[1]) {
            Ordering::Greater => (w[1].clone(), w[0].clone(), -1.0),
            _ => (w[0].clone(), w[1].clone(), 1.0),
        })
        .collect();
    segments.sort_by(|a, b| lex_cmp(&a.0, &b.0).then_with(|| lex_cmp(&a.1, &b.1)));
    let rho = Spectrum::forward(&mollifier(grid, &vec![0.0; grid.n()], epsilon)?);
    let n = grid.n();
    let f = apply_multiplier(&rho, n, |xi, r, out| {
        for (a, b, sign) in &segments {
            let dot_a: f64 = xi.iter().zip(a).map(|(p, q)| p * q).sum();
            let theta: f64 = 2.0
                * PI
                * xi.iter()
                    .zip(a.iter().zip(b))
                    .map(|(p, (q, s))| p * (s - q))
                    .sum::<f64>();
            let phase = Complex64::new(0.0, -2.0 * PI * dot_a).exp() * segment_phase(theta);
            for (j, slot) in out.iter_mut().enumerate() {
                *slot += phase * (sign * (b[j] - a[j]));
            }
        }
        for slot in out.iter_mut() {
            *slot *= r[0];
        }
    })
    .inverse()?;
    if n > 1 {
        let residual = divergence_residual(&f);
        if !(residual <= CURVE_DIVERGENCE_TOL) {
            return Err(Error::precondition(
                "divergence_free",
                format!("rasterised curve has relative divergence {residual:e}"),
            ));
        }
    }
    Ok(f)
}

/// `hⁿ Σ ⟨f, φ⟩` for the rasterised tangent measure `f`.
pub fn circulation_numerator(curve: &Polyline, phi: &GridField, epsilon: f64) -> Result<f64> {
    tangent_measure(curve, *phi.grid(), epsilon)?.inner(phi)
}

/// `|∮⟨φ, t⟩| / (|Γ| ‖Dφ‖_n)`.
pub fn circulation_ratio(curve: &Polyline, phi: &GridField, epsilon: f64) -> Result<f64> {
    let num = circulation_numerator(curve, phi, epsilon)?;
    let n = phi.grid().n();
    let den = curve.length() * lp_norm(&derivative_tensor(phi, 1)?, n as f64)?;
    Ok(num.abs() / nonzero(den)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::fields::{bump, divergence_free};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn op(d: &str) -> Operator {
        catalog::from_descriptor(d).unwrap()
    }

    fn centred_bump(n: usize, size: usize, r: f64) -> GridField {
        let g = TorusGrid::new(n, size).unwrap();
        bump(g, &g.centre(), r, &[1.0])
    }

    #[test]
    fn sobolev_ratio_refines_and_scales() {
        let grad = op("dk_scalar:n=2,k=1");
        let coarse = sobolev_ratio(&grad, &centred_bump(2, 64, 0.25), 0).unwrap();
        let fine = sobolev_ratio(&grad, &centred_bump(2, 128, 0.25), 0).unwrap();
        assert!(coarse > 0.0 && ((fine - coarse) / coarse).abs() < 0.02);
        // u(2·) on a matched grid
        let half = sobolev_ratio(&grad, &centred_bump(2, 128, 0.125), 0).unwrap();
        assert!(((half - coarse) / coarse).abs() < 0.01);
        assert!(matches!(
            sobolev_ratio(
                &grad,
                &GridField::zeros(TorusGrid::new(2, 16).unwrap(), 1),
                0
            ),
            Err(Error::ZeroDenominator)
        ));
        assert!(sobolev_ratio(&op("laplacian:n=2"), &centred_bump(2, 16, 0.2), 0).is_err());
    }

    #[test]
    fn ratios_are_scale_invariant() {
        let u = centred_bump(2, 32, 0.2);
        let grad = op("grad:n=2");
        let lap = op("laplacian:n=2");
        let pairs = [
            (
                sobolev_ratio(&grad, &u, 0).unwrap(),
                sobolev_ratio(&grad, &u.scaled(-3.7), 0).unwrap(),
            ),
            (
                hardy_ratio(&grad, &u, 0).unwrap(),
                hardy_ratio(&grad, &u.scaled(1e3), 0).unwrap(),
            ),
            (
                uniform_ratio(&lap, &u, 0).unwrap(),
                uniform_ratio(&lap, &u.scaled(0.01), 0).unwrap(),
            ),
            (
                fractional_ratio(&grad, &u, 0, 0.5, 4.0 / 3.0).unwrap(),
                fractional_ratio(&grad, &u.scaled(-2.0), 0, 0.5, 4.0 / 3.0).unwrap(),
            ),
        ];
        for (a, b) in pairs {
            assert!((a - b).abs() <= 1e-10 * a);
        }
    }

    #[test]
    fn hardy_ratio_flags_zero_fields_and_exponents() {
        let zero = GridField::zeros(TorusGrid::new(2, 16).unwrap(), 1);
        assert!(matches!(
            hardy_ratio(&op("grad:n=2"), &zero, 0),
            Err(Error::ZeroDenominator)
        ));
        assert!(hardy_ratio(&op("grad:n=2"), &centred_bump(2, 16, 0.2), 1).is_err());
    }

    #[test]
    fn fractional_preconditions() {
        let grad = op("grad:n=2");
        let u = centred_bump(2, 16, 0.2);
        // p = 2 forces sigma = 0
        assert!(fractional_ratio(&grad, &u, 0, 0.0, 2.0).is_err());
        assert!(fractional_ratio(&grad, &u, 0, 0.4, 4.0 / 3.0).is_err());
        assert!(fractional_ratio(&grad, &centred_bump(2, 64, 0.2), 0, 0.5, 4.0 / 3.0).is_err());
        let zero = GridField::zeros(*u.grid(), 1);
        assert!(matches!(
            fractional_ratio(&grad, &zero, 0, 0.5, 4.0 / 3.0),
            Err(Error::ZeroDenominator)
        ));
    }

    #[test]
    fn gagliardo_seminorm_is_translation_invariant() {
        let g = TorusGrid::new(2, 24).unwrap();
        let u = bump(g, &[0.45, 0.55], 0.2, &[1.0, -0.5]);
        let a = gagliardo_seminorm(&u, 0.5, 4.0 / 3.0);
        let b = gagliardo_seminorm(&u.translated(&[3, -5]), 0.5, 4.0 / 3.0);
        assert!((a - b).abs() <= 1e-10 * a);
    }

    #[test]
    fn gagliardo_seminorm_matches_brute_force() {
        let g = TorusGrid::new(1, 8).unwrap();
        let u = GridField::new(g, 1, vec![0.0, 1.0, 3.0, 2.0, 0.5, 0.0, -1.0, 0.0]).unwrap();
        let (sigma, p) = (0.3, 1.5);
        let mut s = 0.0;
        for x in 0..8 {
            for y in 0..8 {
                if x != y {
                    let d = (x as f64 - y as f64).abs();
                    let d = d.min(8.0 - d) / 8.0;
                    s += (u.values()[x] - u.values()[y]).abs().powf(p) / d.powf(1.0 + sigma * p);
                }
            }
        }
        let want = (s / 64.0).powf(1.0 / p);
        assert!((gagliardo_seminorm(&u, sigma, p) - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn duality_checks() {
        let g = TorusGrid::new(2, 32).unwrap();
        let div = op("divergence:n=2");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = divergence_free(g, &g.centre(), 0.2, 3, &mut rng).unwrap();
        let phi = bump(g, &[0.45, 0.5], 0.15, &[0.3, 1.0]);
        let r = duality_ratio(&div, &f, &phi, 1).unwrap();
        let minus = duality_ratio(&div, &f.scaled(-1.0), &phi, 1).unwrap();
        assert_eq!(r, minus);
        let rho = mollifier(g, &g.centre(), 0.1).unwrap();
        let e_rho = GridField::new(g, 2, [rho.values(), rho.values()].concat()).unwrap();
        assert!(matches!(
            duality_ratio(&div, &e_rho, &phi, 1),
            Err(Error::Precondition {
                name: "duality_kernel",
                ..
            })
        ));
        assert!(duality_ratio(&div, &f, &phi, 2).is_err());
    }

    #[test]
    fn blowup_field_solves_the_projected_source() {
        let g = TorusGrid::new(2, 64).unwrap();
        let lap = op("laplacian:n=2");
        let u = blowup_field(&lap, &[1.0], g, 0.1).unwrap();
        let lu = apply_operator(&lap, &u).unwrap();
        let rho = mollifier(g, &g.centre(), 0.1).unwrap();
        // The source without its mean and without the Nyquist modes.
        let mut spec = Spectrum::forward(&rho);
        for flat in 0..g.len() {
            if flat == 0 || g.is_nyquist(flat) {
                spec.set(0, flat, Complex64::new(0.0, 0.0));
            }
        }
        let expected = spec.inverse().unwrap();
        let err = lu
            .values()
            .iter()
            .zip(expected.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8 * rho.values().iter().fold(0.0f64, |m, x| m.max(*x)));
        assert!(blowup_field(&lap, &[1.0, 0.0], g, 0.1).is_err());
    }

    #[test]
    fn divfree_growth_is_translation_invariant() {
        let a = divfree_witness_growth(&[1.0 / 16.0], 64, &[0.5, 0.5]).unwrap();
        let b = divfree_witness_growth(&[1.0 / 16.0], 64, &[0.5 + 3.0 / 64.0, 0.5 - 2.0 / 64.0])
            .unwrap();
        assert!((a[0].1 - b[0].1).abs() <= 1e-8 * a[0].1);
        assert!(matches!(
            divfree_witness_growth(&[1.0 / 64.0], 64, &[0.5, 0.5]),
            Err(Error::Unresolvable { .. })
        ));
    }

    #[test]
    fn circulation_basics() {
        let g = TorusGrid::new(2, 64).unwrap();
        let square = Polyline::square([0.5, 0.5], 0.5);
        assert!(square.is_closed());
        assert_eq!(square.length(), 2.0);
        let c = GridField::from_fn(g, 2, |_, out| {
            out[0] = 1.3;
            out[1] = -0.4;
        });
        assert!(
            circulation_numerator(&square, &c, 1.0 / 16.0)
                .unwrap()
                .abs()
                <= 1e-8
        );
        let phi = bump(g, &[0.3, 0.5], 0.2, &[0.0, 1.0]);
        let fwd = circulation_numerator(&square, &phi, 1.0 / 16.0).unwrap();
        let back = circulation_numerator(&square.reversed(), &phi, 1.0 / 16.0).unwrap();
        assert_eq!(fwd, -back);
        assert!(fwd.abs() > 1e-3);
        let open = Polyline::new(vec![vec![0.3, 0.3], vec![0.6, 0.3]]).unwrap();
        assert!(circulation_numerator(&open, &phi, 1.0 / 16.0).is_err());
    }

    #[test]
    fn tangent_measure_of_a_square_has_the_right_flux() {
        let g = TorusGrid::new(2, 64).unwrap();
        let f = tangent_measure(&Polyline::square([0.5, 0.5], 0.5), g, 1.0 / 16.0).unwrap();
        let phi = GridField::from_fn(g, 2, |x, out| {
            out[0] = -(x[1] - 0.5);
            out[1] = x[0] - 0.5;
        });
        // ∮(−y dx + x dy) = 2·area, scaled by the discrete mass of ρ_ε.
        let rho = mollifier(g, &[0.5, 0.5], 1.0 / 16.0).unwrap();
        let mass = rho.values().iter().sum::<f64>() * g.cell_volume();
        let got = f.inner(&phi).unwrap();
        assert!((got - 0.5 * mass).abs() < 1e-4, "{got} vs {}", 0.5 * mass);
    }
}
