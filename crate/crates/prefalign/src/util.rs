//! Small shared helpers: stable content hashing.

use sha2::{Digest, Sha256};

/// Hex SHA-256 of `bytes`, truncated to `len` hex chars (0 = full digest).
pub(crate) fn sha256_hex(bytes: &[u8], len: usize) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for b in digest.as_slice() {
        hex.push_str(&format!("{b:02x}"));
    }
    if len > 0 && len < hex.len() {
        hex.truncate(len);
    }
    hex
}

/// Stable 64-bit hash of the given parts (order-sensitive, run-independent).
pub(crate) fn hash64(parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p.as_bytes());
    }
    let digest = hasher.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest.as_slice()[..8]);
    u64::from_le_bytes(first)
}
