//! Content digests used for payload references and artifact identity.

use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of the given text.
pub fn digest_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let out = hasher.finalize();
    let mut hex = String::with_capacity(out.len() * 2);
    for byte in out {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Stable 64-bit hash of a string, for deterministic derived values that
/// must not depend on the platform hasher.
pub fn stable_hash64(text: &str) -> u64 {
    let hex = digest_hex(text);
    u64::from_str_radix(&hex[..16], 16).expect("sha256 prefix is valid hex")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable() {
        assert_eq!(digest_hex("abc"), digest_hex("abc"));
        assert_ne!(digest_hex("abc"), digest_hex("abd"));
        assert_eq!(digest_hex("").len(), 64);
    }

    #[test]
    fn known_vector() {
        assert_eq!(
            digest_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
