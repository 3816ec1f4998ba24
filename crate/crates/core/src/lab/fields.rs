use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::grid::{GridField, Spectrum, TorusGrid};
use super::spectral::apply_multiplier;
use crate::classifier::{gauss_legendre, sphere_area};
use crate::error::{Error, Result};

/// `exp(−1/(1−r²))` on `r < 1`, zero outside.
pub fn bump_profile(r: f64) -> f64 {
    if r < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// `∫_{ℝⁿ} bump_profile(|x|) dx`, by Gauss–Legendre quadrature in the radius.
pub fn profile_mass(n: usize) -> f64 {
    let (x, w) = gauss_legendre(200);
    let radial: f64 = x
        .iter()
        .zip(&w)
        .map(|(t, wt)| {
            let r = 0.5 * (t + 1.0);
            0.5 * wt * bump_profile(r) * r.powi(n as i32 - 1)
        })
        .sum();
    sphere_area(n) * radial
}

/// `C^∞` transition equal to 1 for `r ≤ inner` and 0 for `r ≥ outer`.
pub fn cutoff(r: f64, inner: f64, outer: f64) -> f64 {
    let f = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let t = (outer - r) / (outer - inner);
    f(t) / (f(t) + f(1.0 - t))
}

/// Scales need `2h ≤ ε` and supports must stay inside the cell.
pub fn check_resolvable(grid: &TorusGrid, epsilon: f64) -> Result<()> {
    let h = grid.spacing();
    if !(epsilon >= 2.0 * h * (1.0 - 1e-12)) {
        return Err(Error::Unresolvable {
            epsilon,
            spacing: h,
        });
    }
    if epsilon > 0.25 {
        return Err(Error::precondition(
            "support",
            format!("scale {epsilon} exceeds 1/4 and would leave the central half of the cell"),
        ));
    }
    Ok(())
}

fn radius(grid: &TorusGrid, x: &[f64], centre: &[f64], scales: &[f64]) -> f64 {
    grid.displacement(x, centre)
        .iter()
        .zip(scales)
        .map(|(d, s)| (d / s).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Unit-mass mollifier `ρ_ε(x − c) = C ε⁻ⁿ exp(−1/(1−|x−c|²/ε²))`, with `C`
/// fixed by the continuous mass rather than the grid sum.
pub fn mollifier(grid: TorusGrid, centre: &[f64], epsilon: f64) -> Result<GridField> {
    check_resolvable(&grid, epsilon)?;
    let n = grid.n();
    let c = 1.0 / (profile_mass(n) * epsilon.powi(n as i32));
    let scales = vec![epsilon; n];
    Ok(GridField::from_fn(grid, 1, |x, out| {
        out[0] = c * bump_profile(radius(&grid, x, centre, &scales));
    }))
}

/// `fibre · bump_profile(|x − c| / r)`.
pub fn bump(grid: TorusGrid, centre: &[f64], r: f64, fibre: &[f64]) -> GridField {
    blob(grid, centre, &vec![r; grid.n()], fibre)
}

/// Anisotropic bump with one radius per axis.
pub fn blob(grid: TorusGrid, centre: &[f64], radii: &[f64], fibre: &[f64]) -> GridField {
    GridField::from_fn(grid, fibre.len(), |x, out| {
        let b = bump_profile(radius(&grid, x, centre, radii));
        for (o, f) in out.iter_mut().zip(fibre) {
            *o = b * f;
        }
    })
}

/// Ten fixed test fields: five radial bumps and five blobs with aspect
/// ratio 1.25, of growing size and slightly off-centre. Each comes with its
/// nominal radius.
pub fn bump_suite(grid: TorusGrid, fibre: &[f64]) -> Vec<(f64, GridField)> {
    let n = grid.n();
    let mut out = Vec::with_capacity(10);
    for i in 0..5 {
        let r = 0.12 + 0.03 * i as f64;
        let mut c = grid.centre();
        c[0] += 0.01 * i as f64;
        out.push((r, bump(grid, &c, r, fibre)));
    }
    for i in 0..5 {
        let r = 0.13 + 0.03 * i as f64;
        let mut c = grid.centre();
        c[n - 1] -= 0.01 * i as f64;
        let mut radii = vec![r; n];
        radii[i % n] *= 1.25;
        out.push((r, blob(grid, &c, &radii, fibre)));
    }
    out
}

/// Random `ℝⁿ`-valued test functions for pairings: a bump of random centre,
/// radius and direction, modulated by `1 + ½cos(2π m·x + θ)`. Each member
/// has its own seed stream, so members agree across grids.
pub fn phi_suite(grid: TorusGrid, count: usize, seed: u64) -> Vec<GridField> {
    use rand::SeedableRng;
    let n = grid.n();
    (0..count)
        .map(|j| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let centre: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..0.7)).collect();
            let r = rng.random_range(0.12..0.25);
            let dir: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let m: Vec<f64> = (0..n).map(|_| rng.random_range(0..3) as f64).collect();
            let theta = rng.random_range(0.0..2.0 * PI);
            let scales = vec![r; n];
            GridField::from_fn(grid, n, |x, out| {
                let wave = 1.0
                    + 0.5
                        * (2.0 * PI * m.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + theta)
                            .cos();
                let b = bump_profile(radius(&grid, x, &centre, &scales)) * wave;
                for (o, d) in out.iter_mut().zip(&dir) {
                    *o = b * d;
                }
            })
        })
        .collect()
}

/// Lattice points of `[−band, band]ⁿ` whose first nonzero entry is
/// positive, in lexicographic order.
fn half_band(n: usize, band: usize) -> Vec<Vec<i64>> {
    let b = band as i64;
    let side = 2 * band + 1;
    let mut out = Vec::new();
    for flat in 0..side.pow(n as u32) {
        let mut rest = flat;
        let mut v = vec![0i64; n];
        for slot in v.iter_mut().rev() {
            *slot = (rest % side) as i64 - b;
            rest /= side;
        }
        if v.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0) {
            out.push(v);
        }
    }
    out
}

fn lattice_flat(grid: &TorusGrid, xi: &[i64]) -> usize {
    let size = grid.size() as i64;
    let idx: Vec<usize> = xi.iter().map(|&x| x.rem_euclid(size) as usize).collect();
    grid.flat(&idx)
}

/// Mean-zero real field with standard Gaussian coefficients on the
/// frequencies `|ξ|_∞ ≤ band`. Coefficients are drawn per frequency, so the
/// same seed gives the same continuum function on every grid.
pub fn band_limited<R: Rng>(grid: TorusGrid, dim: usize, band: usize, rng: &mut R) -> GridField {
    assert!(
        2 * band < grid.size(),
        "band {band} does not fit on N = {}",
        grid.size()
    );
    let modes = half_band(grid.n(), band);
    let mut spec = Spectrum::zeros(grid, dim);
    for c in 0..dim {
        for xi in &modes {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let z = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
            spec.set(c, lattice_flat(&grid, xi), z);
            let minus: Vec<i64> = xi.iter().map(|x| -x).collect();
            spec.set(c, lattice_flat(&grid, &minus), z.conj());
        }
    }
    spec.inverse().expect("hermitian spectrum is real")
}

/// Random trigonometric polynomial with frequencies `|ξ|_∞ ≤ band`, as a
/// function of the continuum variable.
#[derive(Clone, Debug)]
pub struct TrigPolynomial {
    modes: Vec<(Vec<f64>, f64, f64)>,
}

impl TrigPolynomial {
    pub fn random<R: Rng>(n: usize, band: usize, rng: &mut R) -> Self {
        let modes = half_band(n, band)
            .into_iter()
            .map(|xi| {
                let decay = 1.0 / (1.0 + xi.iter().map(|x| (x * x) as f64).sum::<f64>());
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                (
                    xi.into_iter().map(|x| x as f64).collect(),
                    a * decay,
                    b * decay,
                )
            })
            .collect();
        TrigPolynomial { modes }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.modes
            .iter()
            .map(|(xi, a, b)| {
                let t = 2.0 * PI * xi.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
                a * t.cos() + b * t.sin()
            })
            .sum()
    }
}

/// Divergence-free planar field `(−∂₂ψ, ∂₁ψ)` with stream function
/// `ψ = exp(−|x − c|²/(2s²)) · T(x)`, `s = r/5`, for a random trigonometric
/// polynomial `T`. The envelope is below `1e−12` beyond `1.5r` and its
/// spectrum is negligible at Nyquist for `N ≥ 64`, which a compact bump of
/// the same size is not.
pub fn divergence_free<R: Rng>(
    grid: TorusGrid,
    centre: &[f64],
    r: f64,
    band: usize,
    rng: &mut R,
) -> Result<GridField> {
    if grid.n() != 2 {
        return Err(Error::precondition(
            "stream_function_dimension",
            format!(
                "stream functions generate planar fields only, got n = {}",
                grid.n()
            ),
        ));
    }
    let trig = TrigPolynomial::random(2, band, rng);
    let s = r / 5.0;
    let psi = GridField::from_fn(grid, 1, |x, out| {
        let r2: f64 = grid.displacement(x, centre).iter().map(|d| d * d).sum();
        out[0] = (-r2 / (2.0 * s * s)).exp() * trig.eval(x);
    });
    let spec = Spectrum::forward(&psi);
    apply_multiplier(&spec, 2, |xi, v, out| {
        out[0] = -Complex64::new(0.0, 2.0 * PI * xi[1]) * v[0];
        out[1] = Complex64::new(0.0, 2.0 * PI * xi[0]) * v[0];
    })
    .inverse()
}

/// Fraction of `‖u‖₁` carried by the band of width `width` along the cell
/// boundary; small values mean the torus does not see the periodisation.
pub fn boundary_fraction(u: &GridField, width: f64) -> f64 {
    let grid = *u.grid();
    let total = grid.len();
    let mut edge = 0.0;
    let mut all = 0.0;
    for flat in 0..total {
        let x = grid.point(flat);
        let norm = u.fibre(flat).iter().map(|v| v * v).sum::<f64>().sqrt();
        all += norm;
        if x.iter().any(|&t| t < width || t > 1.0 - width) {
            edge += norm;
        }
    }
    if all == 0.0 {
        0.0
    } else {
        edge / all
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::{divergence_residual, lp_norm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mollifier_has_unit_mass() {
        for (n, size) in [(1, 64), (2, 64), (2, 256), (3, 32)] {
            let g = TorusGrid::new(n, size).unwrap();
            for k in [4.0, 8.0] {
                let eps = k * g.spacing();
                let rho = mollifier(g, &g.centre(), eps).unwrap();
                let mass = lp_norm(&rho, 1.0).unwrap();
                assert!(
                    (mass - 1.0).abs() <= 0.01,
                    "n={n} N={size} eps={eps}: {mass}"
                );
            }
        }
    }

    #[test]
    fn profile_mass_in_one_dimension() {
        // direct trapezoid oracle on a fine grid
        let m = 200_000;
        let trap: f64 = (0..m)
            .map(|i| bump_profile(-1.0 + (i as f64 + 0.5) * 2.0 / m as f64))
            .sum::<f64>()
            * 2.0
            / m as f64;
        assert!((profile_mass(1) - trap).abs() < 1e-9);
    }

    #[test]
    fn unresolvable_scales_are_rejected() {
        let g = TorusGrid::new(2, 64).unwrap();
        assert!(matches!(
            mollifier(g, &g.centre(), 1.0 / 64.0),
            Err(Error::Unresolvable { .. })
        ));
        assert!(mollifier(g, &g.centre(), 2.0 / 64.0).is_ok());
        assert!(mollifier(g, &g.centre(), 0.3).is_err());
    }

    #[test]
    fn cutoff_is_a_smooth_step() {
        assert_eq!(cutoff(0.05, 0.1, 0.2), 1.0);
        assert_eq!(cutoff(0.25, 0.1, 0.2), 0.0);
        assert!((cutoff(0.15, 0.1, 0.2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn band_limited_fields_do_not_depend_on_the_grid() {
        let coarse = TorusGrid::new(2, 16).unwrap();
        let fine = TorusGrid::new(2, 32).unwrap();
        let a = band_limited(coarse, 1, 3, &mut ChaCha8Rng::seed_from_u64(2));
        let b = band_limited(fine, 1, 3, &mut ChaCha8Rng::seed_from_u64(2));
        for i in 0..16 {
            for j in 0..16 {
                let x = a.values()[coarse.flat(&[i, j])];
                let y = b.values()[fine.flat(&[2 * i, 2 * j])];
                assert!((x - y).abs() < 1e-12);
            }
        }
        let mean: f64 = a.values().iter().sum::<f64>() / a.values().len() as f64;
        assert!(mean.abs() < 1e-14);
    }

    #[test]
    fn stream_function_fields_are_divergence_free() {
        let g = TorusGrid::new(2, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = divergence_free(g, &g.centre(), 0.2, 3, &mut rng).unwrap();
        assert!(divergence_residual(&f) <= 1e-8);
        assert!(boundary_fraction(&f, 0.2) < 1e-8);
        assert!(
            divergence_free(TorusGrid::new(3, 8).unwrap(), &[0.5; 3], 0.2, 2, &mut rng).is_err()
        );
    }
}
