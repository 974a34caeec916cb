//! Seed derivation for reproducible pipelines.
//!
//! Every stage (data generation, initialization, training noise, evaluation
//! sampling) gets its own stream derived from one master seed and a purpose
//! label, so adding draws to one stage never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stable 64-bit FNV-1a digest of a label. The standard library hasher is
/// deliberately unstable across releases, which would break bit-exact
/// reproducibility, so the digest is spelled out here.
fn label_digest(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Derive an independent deterministic stream from a master seed and a
/// purpose label.
pub fn derive_rng(seed: u64, label: &str) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&label_digest(label).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_deterministic_and_label_separated() {
        let mut a = derive_rng(7, "train");
        let mut b = derive_rng(7, "train");
        let mut c = derive_rng(7, "eval");
        let mut d = derive_rng(8, "train");
        let xa: u64 = a.random();
        assert_eq!(xa, b.random::<u64>());
        assert_ne!(xa, c.random::<u64>());
        assert_ne!(xa, d.random::<u64>());
    }
}
