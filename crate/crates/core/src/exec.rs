//! Chunked data-parallel execution with reproducible random streams.
//!
//! Work is split into fixed-size chunks whose boundaries depend only on the
//! problem size. Each chunk draws from its own ChaCha stream keyed by
//! `(seed, stratum, chunk)`, and per-chunk results are returned in chunk
//! order, so the outcome is identical for any thread count and for the
//! sequential fallback.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// How chunked work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Rayon thread pool (falls back to sequential without the `parallel`
    /// feature).
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Number of paths / samples handled by one RNG stream.
pub const CHUNK_SIZE: usize = 2048;

/// Stream tags keep different estimators on disjoint substreams even when
/// they share a user seed.
pub mod tag {
    pub const NOISE: u64 = 1;
    pub const FK_PATHS: u64 = 2;
    pub const FK_PAIRS: u64 = 3;
    pub const SIMPLEX_MC: u64 = 4;
    pub const SPECTRAL_MC: u64 = 5;
    pub const PERMUTATIONS: u64 = 6;
    pub const TEST: u64 = 7;
}

/// RNG for the substream `(seed, tag, stratum, chunk)`.
pub fn stream_rng(seed: u64, tag: u64, stratum: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    debug_assert!(stratum < 1 << 16 && chunk < 1 << 40);
    rng.set_stream((tag << 56) | (stratum << 40) | chunk);
    rng
}

/// SplitMix64 finalizer, used to derive independent child seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splits `n` items into `(start, len)` chunks of [`CHUNK_SIZE`].
pub fn chunks(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(CHUNK_SIZE))
        .map(|c| {
            let start = c * CHUNK_SIZE;
            (start, CHUNK_SIZE.min(n - start))
        })
        .collect()
}

/// Maps `f` over `0..n` and returns the results in index order.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}
