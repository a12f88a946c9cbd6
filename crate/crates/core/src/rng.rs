//! Seed plumbing: one 64-bit run seed fans out into named sub-streams so a
//! change in one module's draws never shifts another's.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn substream(seed: u64, name: &str) -> Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Sub-stream keyed by a name and an integer, e.g. an optimization step.
pub fn substream_at(seed: u64, name: &str, index: u64) -> Rng {
    substream(seed, &format!("{name}#{index}"))
}
