//! Streaming mean/variance accumulators with deterministic merging.

use serde::{Deserialize, Serialize};

/// Welford accumulator; merges use Chan's pairwise update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &Accumulator) -> Accumulator {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        Accumulator { n, mean, m2 }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Accumulator::default();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// Tree reduction in a fixed shape: the result depends only on the order of
/// `parts`, never on how they were produced.
pub fn pairwise_merge(parts: &[Accumulator]) -> Accumulator {
    match parts.len() {
        0 => Accumulator::default(),
        1 => parts[0],
        n => {
            let (l, r) = parts.split_at(n / 2);
            pairwise_merge(l).merge(&pairwise_merge(r))
        }
    }
}

/// Monte Carlo estimate with provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub truncation_max_jumps: usize,
    pub truncated_fraction: f64,
}

impl EstimatorResult {
    pub fn from_accumulator(acc: &Accumulator, seed: u64) -> Self {
        EstimatorResult {
            mean: acc.mean,
            stderr: acc.stderr(),
            n_samples: acc.n,
            seed,
            truncation_max_jumps: 0,
            truncated_fraction: 0.0,
        }
    }

    /// `|a - b| / sqrt(sa^2 + sb^2)`; zero when both are exact and equal.
    pub fn z_score(a: f64, sa: f64, b: f64, sb: f64) -> f64 {
        let sigma = sa.hypot(sb);
        let delta = (a - b).abs();
        if sigma == 0.0 {
            if delta == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            delta / sigma
        }
    }
}

/// Real-valued estimate with a standard error (zero when deterministic).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0 }
    }
}
