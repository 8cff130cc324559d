//! Seed-derived random streams.
//!
//! Every stochastic generator draws from a ChaCha8 stream keyed by an
//! explicit 64-bit seed plus a stream number. ChaCha is counter based, so a
//! path depends only on `(seed, stream)` and never on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream numbers used by the generators.
pub mod streams {
    pub const GBM: u64 = 1;
    pub const FBM: u64 = 2;
    pub const BROWNIAN: u64 = 3;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` standard normal draws for `(seed, stream)`.
pub fn normals(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}
