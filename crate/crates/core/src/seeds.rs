//! Deterministic seed derivation.
//!
//! `child_seed(root, name)` is the first 8 bytes (little-endian) of
//! `SHA-256(root.to_le_bytes() || name)`. It does not depend on the platform
//! or the standard library's hasher.

use sha2::{Digest, Sha256};

pub fn child_seed(root: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(name.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

/// Seed for a numbered sub-stream, e.g. `(epoch, shard, round)`.
pub fn stream_seed(root: u64, parts: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    for p in parts {
        h.update(p.to_le_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_and_stable() {
        assert_eq!(child_seed(7, "kge"), child_seed(7, "kge"));
        assert_ne!(child_seed(7, "kge"), child_seed(7, "rgnn"));
        assert_ne!(child_seed(7, "kge"), child_seed(8, "kge"));
        assert_ne!(stream_seed(1, &[0, 1]), stream_seed(1, &[1, 0]));
    }
}
