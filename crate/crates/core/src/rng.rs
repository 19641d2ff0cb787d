//! Reproducible random streams.
//!
//! Every Monte Carlo computation is split into fixed-size blocks. Block `b`
//! of a computation seeded with `seed` always draws from the stream
//! `ChaCha8Rng::seed_from_u64(mix(seed, b))`, and block results are reduced in
//! block order, so results do not depend on how many worker threads run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Samples per block for replication loops.
pub const BLOCK_SIZE: u64 = 1 << 14;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive mix of a seed with a list of coordinates.
pub fn derive_seed(base: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(base), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

pub fn stream(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

/// Stream for block `block` of the computation seeded with `seed`.
pub fn block_stream(seed: u64, block: u64) -> StreamRng {
    stream(derive_seed(seed, &[block]))
}

/// Splits `total` items into `(block_index, len)` pairs of at most `block_size`.
pub fn blocks(total: u64, block_size: u64) -> Vec<(u64, u64)> {
    assert!(block_size > 0);
    let n = total.div_ceil(block_size);
    (0..n)
        .map(|b| (b, block_size.min(total - b * block_size)))
        .collect()
}

/// Runs `f` on every block and returns the results in block order.
pub fn map_blocks<T, F>(total: u64, block_size: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync + Send,
{
    let work = blocks(total, block_size);
    par_map(&work, |&(b, len)| f(b, len))
}

/// Order-preserving map, parallel when the `parallel` feature is on.
pub fn par_map<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Runs `f` inside a pool of `threads` workers (no-op without `parallel`).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .expect("thread pool")
            .install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}
