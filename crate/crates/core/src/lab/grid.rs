use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Uniform periodic grid on `[0,1)ⁿ` with `N` points per axis.
///
/// Flat indices are row-major with axis 0 slowest. Grid point `j` along an
/// axis sits at `j·h`; its frequency is `j` for `j < N/2` and `j − N`
/// otherwise, so the lattice is `[−N/2, N/2)ⁿ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TorusGrid {
    n: usize,
    size: usize,
}

impl TorusGrid {
    pub fn new(n: usize, size: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::precondition(
                "grid_dimension",
                "dimension must be positive",
            ));
        }
        if size < 8 || size % 2 != 0 {
            return Err(Error::precondition(
                "grid_size",
                format!("points per axis must be even and at least 8, got {size}"),
            ));
        }
        size.checked_pow(n as u32)
            .filter(|&t| t <= 1 << 28)
            .ok_or_else(|| {
                Error::precondition("grid_size", format!("{size}^{n} points is too many"))
            })?;
        Ok(TorusGrid { n, size })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.size as f64
    }

    /// `hⁿ`, the Riemann-sum weight of one point.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.n as i32)
    }

    /// Total number of points, `Nⁿ`.
    pub fn len(&self) -> usize {
        self.size.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.n];
        let mut rest = flat;
        for slot in idx.iter_mut().rev() {
            *slot = rest % self.size;
            rest /= self.size;
        }
        idx
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter()
            .fold(0, |acc, &i| acc * self.size + i % self.size)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let h = self.spacing();
        self.index(flat).into_iter().map(|i| i as f64 * h).collect()
    }

    pub fn frequency(&self, flat: usize) -> Vec<f64> {
        let half = self.size / 2;
        self.index(flat)
            .into_iter()
            .map(|i| {
                if i < half {
                    i as f64
                } else {
                    i as f64 - self.size as f64
                }
            })
            .collect()
    }

    /// Some coordinate equals `−N/2`; such modes have no real partner.
    pub fn is_nyquist(&self, flat: usize) -> bool {
        self.index(flat).contains(&(self.size / 2))
    }

    /// The centre point `(1/2, …, 1/2)`.
    pub fn centre(&self) -> Vec<f64> {
        vec![0.5; self.n]
    }

    /// Shortest periodic displacement `x − c`, each coordinate in `[−1/2, 1/2)`.
    pub fn displacement(&self, x: &[f64], c: &[f64]) -> Vec<f64> {
        x.iter().zip(c).map(|(a, b)| wrap(a - b)).collect()
    }
}

fn wrap(d: f64) -> f64 {
    d - (d + 0.5).floor()
}

/// Real `dim`-valued samples on a grid, stored component-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: TorusGrid,
    dim: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: TorusGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != dim * grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {}-component field on {} points",
                values.len(),
                dim,
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::precondition(
                "finite_values",
                "field has non-finite entries",
            ));
        }
        Ok(GridField { grid, dim, values })
    }

    pub fn zeros(grid: TorusGrid, dim: usize) -> Self {
        GridField {
            grid,
            dim,
            values: vec![0.0; dim * grid.len()],
        }
    }

    /// Samples `f(x)` at every grid point; `f` fills one fibre.
    pub fn from_fn(grid: TorusGrid, dim: usize, f: impl Fn(&[f64], &mut [f64]) + Sync) -> Self {
        let total = grid.len();
        let pointwise: Vec<Vec<f64>> = (0..total)
            .into_par_iter()
            .map(|flat| {
                let mut out = vec![0.0; dim];
                f(&grid.point(flat), &mut out);
                out
            })
            .collect();
        let mut values = vec![0.0; dim * total];
        for (flat, v) in pointwise.iter().enumerate() {
            for (c, x) in v.iter().enumerate() {
                values[c * total + flat] = *x;
            }
        }
        GridField { grid, dim, values }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let t = self.grid.len();
        &self.values[c * t..(c + 1) * t]
    }

    pub fn fibre(&self, flat: usize) -> Vec<f64> {
        let t = self.grid.len();
        (0..self.dim).map(|c| self.values[c * t + flat]).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        GridField {
            grid: self.grid,
            dim: self.dim,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn try_sub(&self, other: &GridField) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(GridField {
            grid: self.grid,
            dim: self.dim,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn try_add(&self, other: &GridField) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(GridField {
            grid: self.grid,
            dim: self.dim,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// Riemann-sum pairing `hⁿ Σ ⟨self, other⟩`.
    pub fn inner(&self, other: &GridField) -> Result<f64> {
        self.check_same_shape(other)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        Ok(s * self.grid.cell_volume())
    }

    /// Cyclic shift by whole cells: `out(x) = self(x − shift·h)`.
    pub fn translated(&self, shift: &[isize]) -> Self {
        let g = self.grid;
        let total = g.len();
        let size = g.size() as isize;
        let mut values = vec![0.0; self.values.len()];
        for flat in 0..total {
            let idx = g.index(flat);
            let moved: Vec<usize> = idx
                .iter()
                .zip(shift)
                .map(|(&i, &s)| (i as isize + s).rem_euclid(size) as usize)
                .collect();
            let to = g.flat(&moved);
            for c in 0..self.dim {
                values[c * total + to] = self.values[c * total + flat];
            }
        }
        GridField {
            grid: g,
            dim: self.dim,
            values,
        }
    }

    fn check_same_shape(&self, other: &GridField) -> Result<()> {
        if self.grid != other.grid || self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "fields of shape {}x{}^{} and {}x{}^{}",
                self.dim,
                self.grid.size(),
                self.grid.n(),
                other.dim,
                other.grid.size(),
                other.grid.n()
            )));
        }
        Ok(())
    }
}

/// Fourier coefficients `û(ξ) = N⁻ⁿ Σₓ u(x) e^{−2πiξ·x}`, component-major,
/// so that `u(x) = Σ_ξ û(ξ) e^{2πiξ·x}` and `hⁿΣ|u|² = Σ|û|²`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    grid: TorusGrid,
    dim: usize,
    coeffs: Vec<Complex64>,
}

/// Largest imaginary part, relative to the largest real part, tolerated
/// when returning to physical space.
pub const REALNESS_TOL: f64 = 1e-10;

impl Spectrum {
    pub fn zeros(grid: TorusGrid, dim: usize) -> Self {
        Spectrum {
            grid,
            dim,
            coeffs: vec![Complex64::new(0.0, 0.0); dim * grid.len()],
        }
    }

    pub fn forward(u: &GridField) -> Self {
        let grid = u.grid;
        let total = grid.len();
        let scale = 1.0 / total as f64;
        let coeffs: Vec<Complex64> = (0..u.dim)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut data: Vec<Complex64> = u
                    .component(c)
                    .iter()
                    .map(|&v| Complex64::new(v, 0.0))
                    .collect();
                transform(&grid, &mut data, false);
                data.into_iter().map(move |z| z * scale)
            })
            .collect();
        Spectrum {
            grid,
            dim: u.dim,
            coeffs,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn at(&self, c: usize, flat: usize) -> Complex64 {
        self.coeffs[c * self.grid.len() + flat]
    }

    pub fn set(&mut self, c: usize, flat: usize, z: Complex64) {
        let t = self.grid.len();
        self.coeffs[c * t + flat] = z;
    }

    /// `Σ_ξ |û(ξ)|²` over all components.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Back to physical space; fails when the result is not real.
    pub fn inverse(&self) -> Result<GridField> {
        let grid = self.grid;
        let total = grid.len();
        let parts: Vec<Vec<Complex64>> = (0..self.dim)
            .into_par_iter()
            .map(|c| {
                let mut data = self.coeffs[c * total..(c + 1) * total].to_vec();
                transform(&grid, &mut data, true);
                data
            })
            .collect();
        let max_re = parts
            .iter()
            .flatten()
            .map(|z| z.re.abs())
            .fold(0.0, f64::max);
        let max_im = parts
            .iter()
            .flatten()
            .map(|z| z.im.abs())
            .fold(0.0, f64::max);
        if max_im > REALNESS_TOL * max_re {
            return Err(Error::NonReal(max_im / max_re));
        }
        GridField::new(
            grid,
            self.dim,
            parts.into_iter().flatten().map(|z| z.re).collect(),
        )
    }
}

/// Unnormalised n-dimensional DFT in place, axis by axis.
fn transform(grid: &TorusGrid, data: &mut [Complex64], inverse: bool) {
    let size = grid.size();
    let n = grid.n();
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(size)
    } else {
        planner.plan_fft_forward(size)
    };
    let total = data.len();
    let mut line = vec![Complex64::new(0.0, 0.0); size];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for axis in 0..n {
        let stride = size.pow((n - 1 - axis) as u32);
        let block = stride * size;
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (j, z) in line.iter_mut().enumerate() {
                    *z = data[base + j * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, z) in line.iter().enumerate() {
                    data[base + j * stride] = *z;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: TorusGrid, dim: usize, seed: u64) -> GridField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..dim * grid.len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        GridField::new(grid, dim, values).unwrap()
    }

    #[test]
    fn grid_preconditions() {
        assert!(TorusGrid::new(2, 6).is_err());
        assert!(TorusGrid::new(2, 9).is_err());
        assert!(TorusGrid::new(0, 8).is_err());
        let g = TorusGrid::new(2, 48).unwrap();
        assert_eq!(g.len(), 2304);
        assert_eq!(g.frequency(g.flat(&[47, 24])), vec![-1.0, -24.0]);
        assert!(g.is_nyquist(g.flat(&[3, 24])));
    }

    #[test]
    fn round_trip_and_parseval() {
        for (n, size) in [(1, 8), (2, 16), (2, 24), (3, 8)] {
            let g = TorusGrid::new(n, size).unwrap();
            let u = random_field(g, 2, 5);
            let s = Spectrum::forward(&u);
            let back = s.inverse().unwrap();
            let err = back
                .try_sub(&u)
                .unwrap()
                .values()
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            let norm = u.values().iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(err <= 1e-12 * norm);
            let physical = u.inner(&u).unwrap();
            assert!((physical - s.energy()).abs() <= 1e-10 * physical);
        }
    }

    #[test]
    fn forward_of_a_plane_wave() {
        let g = TorusGrid::new(2, 8).unwrap();
        let u = GridField::from_fn(g, 1, |x, out| {
            out[0] = (2.0 * std::f64::consts::PI * (x[0] + 2.0 * x[1])).cos()
        });
        let s = Spectrum::forward(&u);
        let plus = g.flat(&[1, 2]);
        let minus = g.flat(&[7, 6]);
        assert!((s.at(0, plus) - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        assert!((s.at(0, minus) - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        assert!((s.energy() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn non_real_spectra_are_refused() {
        let g = TorusGrid::new(1, 8).unwrap();
        let mut s = Spectrum::zeros(g, 1);
        s.set(0, 1, Complex64::new(1.0, 0.0));
        assert!(matches!(s.inverse(), Err(Error::NonReal(_))));
    }

    #[test]
    fn translation_is_cyclic() {
        let g = TorusGrid::new(2, 8).unwrap();
        let u = random_field(g, 1, 1);
        let t = u.translated(&[3, -2]);
        assert_eq!(t.values()[g.flat(&[3, 6])], u.values()[0]);
        assert_eq!(t.translated(&[-3, 2]), u);
    }

    #[test]
    fn displacement_wraps() {
        let g = TorusGrid::new(2, 8).unwrap();
        let d = g.displacement(&[0.9, 0.1], &[0.1, 0.9]);
        assert!((d[0] + 0.2).abs() < 1e-15 && (d[1] - 0.2).abs() < 1e-15);
    }
}
