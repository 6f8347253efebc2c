//! Stage seeds derived from one master seed by labeled hashing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stage_rng(master: u64, label: &str) -> ChaCha8Rng {
    rng(derive_seed(master, label))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_separate_streams() {
        assert_eq!(derive_seed(7, "train"), derive_seed(7, "train"));
        assert_ne!(derive_seed(7, "train"), derive_seed(7, "smote"));
        assert_ne!(derive_seed(7, "train"), derive_seed(8, "train"));
    }
}
