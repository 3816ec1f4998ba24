use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    /// First round from a scrambled-free Halton sequence, later rounds random.
    LowDiscrepancy,
    UniformRandom,
}

/// Deterministic source of unit vectors on `S^{n-1}`, handed out in rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereSampler {
    pub n: usize,
    pub strategy: SamplingStrategy,
    pub count_per_round: usize,
    pub max_rounds: usize,
    pub seed: u64,
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

// stream ids of the random generator; rounds use their own index
const VALIDATION_STREAM: u64 = 1 << 40;

impl SphereSampler {
    pub fn new(n: usize, seed: u64) -> Self {
        SphereSampler {
            n,
            strategy: SamplingStrategy::LowDiscrepancy,
            count_per_round: 512,
            max_rounds: 8,
            seed,
        }
    }

    pub fn with_count(mut self, count_per_round: usize) -> Self {
        self.count_per_round = count_per_round.max(1);
        self
    }

    pub fn with_rounds(mut self, max_rounds: usize) -> Self {
        self.max_rounds = max_rounds.max(1);
        self
    }

    pub fn with_strategy(mut self, strategy: SamplingStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    /// Directions of round `r`.
    pub fn round(&self, r: usize) -> Vec<Vec<f64>> {
        if r == 0
            && self.strategy == SamplingStrategy::LowDiscrepancy
            && 2 * self.n.div_ceil(2) <= PRIMES.len()
        {
            self.halton_round()
        } else {
            self.random(self.count_per_round, r as u64)
        }
    }

    /// Fresh directions independent of every round, used for validation.
    pub fn fresh(&self, count: usize) -> Vec<Vec<f64>> {
        self.random(count, VALIDATION_STREAM)
    }

    fn random(&self, count: usize, stream: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let v: Vec<f64> = (0..self.n).map(|_| rng.sample(StandardNormal)).collect();
            if let Some(u) = normalized(v) {
                out.push(u);
            }
        }
        out
    }

    fn halton_round(&self) -> Vec<Vec<f64>> {
        let pairs = self.n.div_ceil(2);
        let mut out = Vec::with_capacity(self.count_per_round);
        let mut index = 1u64;
        while out.len() < self.count_per_round {
            let mut v = Vec::with_capacity(2 * pairs);
            for p in 0..pairs {
                let u1 = radical_inverse(PRIMES[2 * p], index);
                let u2 = radical_inverse(PRIMES[2 * p + 1], index);
                // Box–Muller; u1 > 0 for index >= 1
                let r = (-2.0 * u1.ln()).sqrt();
                let t = 2.0 * std::f64::consts::PI * u2;
                v.push(r * t.cos());
                v.push(r * t.sin());
            }
            v.truncate(self.n);
            index += 1;
            if let Some(u) = normalized(v) {
                out.push(u);
            }
        }
        out
    }
}

fn normalized(v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-8 || !norm.is_finite() {
        return None;
    }
    Some(v.into_iter().map(|x| x / norm).collect())
}

fn radical_inverse(base: u64, mut i: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_are_unit_and_deterministic() {
        for n in 1..6 {
            let s = SphereSampler::new(n, 7).with_count(64);
            for r in 0..3 {
                let a = s.round(r);
                assert_eq!(a.len(), 64);
                assert_eq!(a, s.round(r));
                for v in &a {
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    assert!((norm - 1.0).abs() <= 1e-14);
                }
            }
        }
    }

    #[test]
    fn rounds_and_validation_differ() {
        let s = SphereSampler::new(3, 1).with_count(16);
        assert_ne!(s.round(1), s.round(2));
        assert_ne!(s.round(1)[..4], s.fresh(16)[..4]);
        assert_ne!(
            s.round(0),
            s.with_strategy(SamplingStrategy::UniformRandom).round(0)
        );
    }

    #[test]
    fn seeds_change_random_rounds() {
        let a = SphereSampler::new(2, 1).round(1);
        let b = SphereSampler::new(2, 2).round(1);
        assert_ne!(a, b);
    }

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(2, 1), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(2, 3), 0.75);
    }
}
