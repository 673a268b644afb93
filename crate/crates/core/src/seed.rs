//! Deterministic random-stream derivation.
//!
//! Every randomized component draws from its own generator, seeded from the
//! master seed plus a fixed label. Adding draws in one component therefore
//! never shifts the stream seen by another, and a (config, seed) pair always
//! reproduces the same artifacts byte for byte.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use sha2::{Digest, Sha256};

/// Derive the generator for `label` under `master_seed`.
pub fn labeled_rng(master_seed: u64, label: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_inputs_same_stream() {
        let a: Vec<u64> = labeled_rng(7, "sim").random_iter().take(8).collect();
        let b: Vec<u64> = labeled_rng(7, "sim").random_iter().take(8).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn labels_and_seeds_separate_streams() {
        let base: u64 = labeled_rng(7, "sim").random();
        assert_ne!(base, labeled_rng(7, "props").random());
        assert_ne!(base, labeled_rng(8, "sim").random());
    }
}
