//! Seed derivation and configuration fingerprints.
//!
//! Every random artifact in the pipeline is keyed by a `u64` seed derived from
//! a master seed plus a context path, e.g. `derive(master, "corpus", &[class,
//! index])`. Derivation goes through SHA-256 so the mapping is stable across
//! platforms and releases, and siblings (per-sample, per-attack, per-mask
//! seeds) are independent of the order they are generated in.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a child seed from `base`, a context tag, and integer path parts.
pub fn derive_seed(base: u64, tag: &str, parts: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update([tag.len() as u8]);
    hasher.update(tag.as_bytes());
    for part in parts {
        hasher.update(part.to_le_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Deterministic RNG used throughout the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Hex SHA-256 of a byte string, used to fingerprint models and configs.
pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}
