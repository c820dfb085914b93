//! Deterministic content-hash identifiers.

use sha2::{Digest, Sha256};

/// Number of hex characters kept from the digest.
pub const ID_HEX_LEN: usize = 16;

/// Hex SHA-256 of `parts` joined with NUL separators.
pub fn digest_hex(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update([0u8]);
        }
        hasher.update(part.as_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Hex SHA-256 of raw bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `prefix` followed by the first [`ID_HEX_LEN`] hex chars of the digest of `parts`.
pub fn content_id(prefix: &str, parts: &[&str]) -> String {
    let hex = digest_hex(parts);
    format!("{prefix}{}", &hex[..ID_HEX_LEN])
}

pub fn seed_id(source: &str, content: &str) -> String {
    content_id("s_", &[source, content])
}

pub fn proto_id(seed_id: &str, title: &str) -> String {
    content_id("p_", &[seed_id, title])
}

pub fn question_id(proto_id: &str) -> String {
    content_id("q_", &[proto_id])
}

pub fn subquestion_id(parent_id: &str, title: &str) -> String {
    content_id("sq_", &[parent_id, title])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_prefixed_and_truncated() {
        let id = seed_id("text", "hello");
        assert!(id.starts_with("s_"));
        assert_eq!(id.len(), 2 + ID_HEX_LEN);
        assert_eq!(id, seed_id("text", "hello"));
        assert_ne!(id, seed_id("gdelt", "hello"));
    }

    #[test]
    fn separator_prevents_concatenation_collisions() {
        assert_ne!(digest_hex(&["ab", "c"]), digest_hex(&["a", "bc"]));
    }
}
