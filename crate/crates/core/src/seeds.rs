//! Deterministic seed derivation.
//!
//! All randomness flows from one global seed. Modules derive named
//! sub-seeds so each pipeline stage can be re-run independently with
//! identical results, and per-step seeds keep long training loops
//! resumable without replaying RNG state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Sub-seed for a named scope (e.g. "detector/init", "augment").
pub fn derive_seed(global_seed: u64, scope: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global_seed.to_le_bytes());
    h.update(scope.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

/// Stateless per-step seed; step `n` gives the same value no matter how
/// the loop reached it, which makes checkpoint resume bit-exact.
pub fn step_seed(scope_seed: u64, step: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(scope_seed.to_le_bytes());
    h.update(step.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

/// RNG for a seed. ChaCha8 is platform-independent and fast.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
