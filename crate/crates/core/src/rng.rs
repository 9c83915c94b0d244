//! Seeded random number generation.
//!
//! Every stochastic step in the crate (weight init, minibatch sampling,
//! k-means++ seeding, Monte Carlo KLD, waveform sampling, session planning)
//! draws from ChaCha20 as implemented by `rand_chacha`. ChaCha20 is a
//! counter-based generator: its output is a pure function of (key, stream,
//! block counter), so streams are bit-identical across platforms. A `u64`
//! seed is expanded into the 256-bit key with `SeedableRng::seed_from_u64`
//! (PCG32 expansion, fixed by `rand_core`). Independent sub-streams are
//! derived with [`derive_stream`] by selecting a ChaCha stream id instead of
//! re-seeding.

use rand::SeedableRng;
pub use rand_chacha::ChaCha20Rng as Rng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Same key as `seeded(seed)` but on ChaCha stream `stream`.
pub fn derive_stream(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
