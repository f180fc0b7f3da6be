//! Deterministic per-trial random streams.
//!
//! Every stream is keyed by `(master seed, trial index, label)`. The key is
//! hashed with SHA-256 and the digest seeds a ChaCha8 generator, so a trial
//! draws the same numbers whether it runs first, last, serially or on any
//! worker thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Builds the generator for one `(seed, trial, label)` triple.
pub fn derive_stream(master_seed: u64, trial: u64, label: &str) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(b"tailstdf/stream/v1");
    hasher.update(master_seed.to_le_bytes());
    hasher.update(trial.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Mixes an extra integer (for instance a grid index) into a master seed.
pub fn child_seed(master_seed: u64, tag: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"tailstdf/child/v1");
    hasher.update(master_seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
