//! Quadrature on the unit sphere `S^{n-1}`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Surface measure `|S^{n-1}| = 2π^{n/2} / Γ(n/2)`.
pub fn sphere_area(n: usize) -> f64 {
    assert!(n >= 1);
    // Γ(n/2) for integer n
    let gamma_half = if n % 2 == 0 {
        (1..n / 2).map(|i| i as f64).product::<f64>()
    } else {
        // Γ(m + 1/2) = (2m)! / (4^m m!) √π with m = (n-1)/2
        let m = (n - 1) / 2;
        (0..m).map(|i| (i as f64) + 0.5).product::<f64>() * PI.sqrt()
    };
    2.0 * PI.powf(n as f64 / 2.0) / gamma_half
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    for i in 0..q.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_q and its derivative
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=q {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pq = if q == 0 {
                1.0
            } else if q == 1 {
                x
            } else {
                p1
            };
            let pq1 = if q == 1 { 1.0 } else { p0 };
            dp = q as f64 * (x * pq - pq1) / (x * x - 1.0);
            let dx = pq / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        nodes[q - 1 - i] = -x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[q - 1 - i] = w;
    }
    (nodes, weights)
}

/// A weighted point set on the sphere.
#[derive(Clone, Debug)]
pub struct SphereRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// `true` for the antipodally paired Monte Carlo rule.
    pub monte_carlo: bool,
}

/// Product-angle rule for `n ∈ {1, 2, 3}`; symmetrised Monte Carlo with
/// `q` antipodal pairs otherwise.
pub fn sphere_rule(n: usize, q: usize, seed: u64) -> SphereRule {
    let q = q.max(1);
    match n {
        1 => SphereRule {
            points: vec![vec![1.0], vec![-1.0]],
            weights: vec![1.0, 1.0],
            monte_carlo: false,
        },
        2 => {
            let w = 2.0 * PI / q as f64;
            let points = (0..q)
                .map(|j| {
                    let t = 2.0 * PI * (j as f64 + 0.5) / q as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect();
            SphereRule {
                points,
                weights: vec![w; q],
                monte_carlo: false,
            }
        }
        3 => {
            let (t, wt) = gauss_legendre(q);
            let m = 2 * q;
            let wp = 2.0 * PI / m as f64;
            let mut points = Vec::with_capacity(q * m);
            let mut weights = Vec::with_capacity(q * m);
            for (ti, wi) in t.iter().zip(&wt) {
                let s = (1.0 - ti * ti).max(0.0).sqrt();
                for j in 0..m {
                    let phi = 2.0 * PI * (j as f64 + 0.5) / m as f64;
                    points.push(vec![s * phi.cos(), s * phi.sin(), *ti]);
                    weights.push(wi * wp);
                }
            }
            SphereRule {
                points,
                weights,
                monte_carlo: false,
            }
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let area = sphere_area(n);
            let mut points = Vec::with_capacity(2 * q);
            while points.len() < 2 * q {
                let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-8 {
                    continue;
                }
                let u: Vec<f64> = v.iter().map(|x| x / norm).collect();
                points.push(u.iter().map(|x| -x).collect());
                points.push(u);
            }
            SphereRule {
                points,
                weights: vec![area / (2 * q) as f64; 2 * q],
                monte_carlo: true,
            }
        }
    }
}
