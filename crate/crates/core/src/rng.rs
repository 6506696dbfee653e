//! Seeded random streams.
//!
//! Every randomized routine takes an explicit RNG so runs are reproducible.
//! A master seed fans out into named substreams via SHA-256, so adding a new
//! stream (or benchmark cell) never perturbs existing ones.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// The RNG used everywhere in this crate. Fixed concrete type so that results
/// are stable across platforms and across `rand` upgrades.
pub type Stream = ChaCha12Rng;

/// Derive a substream from a master seed and a label.
pub fn substream(master: u64, label: &str) -> Stream {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update([0u8]);
    h.update(label.as_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(seed)
}

/// Collapse a master seed and label into a derived u64 seed (for configs that
/// carry plain integer seeds).
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update([1u8]);
    h.update(label.as_bytes());
    let digest = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(b)
}
