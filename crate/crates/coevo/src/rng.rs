//! Deterministic random stream derivation.
//!
//! Every random decision in a run draws from a ChaCha stream derived
//! statelessly from the root seed plus a role tag and slot indices, so a
//! given (seed, generation, slot) always sees the same stream regardless
//! of scheduling or of where a run was resumed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Role tags keeping independent decision streams apart.
pub mod role {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const RECOMBINE: u64 = 3;
    pub const MUTATE: u64 = 4;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes the root seed with an ordered list of tags into a child seed.
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    let mut acc = splitmix(root);
    for &t in tags {
        acc = splitmix(acc ^ splitmix(t));
    }
    acc
}

/// A seeded stream for one (role, generation, slot) decision point.
pub fn stream(root: u64, tags: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(root, tags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn derivation_is_stable_and_tag_sensitive() {
        let a = derive_seed(42, &[role::INIT, 0, 3]);
        let b = derive_seed(42, &[role::INIT, 0, 3]);
        let c = derive_seed(42, &[role::INIT, 0, 4]);
        let d = derive_seed(42, &[role::MUTATE, 0, 3]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn streams_with_equal_tags_emit_equal_draws() {
        let mut s1 = stream(7, &[role::RECOMBINE, 2, 1]);
        let mut s2 = stream(7, &[role::RECOMBINE, 2, 1]);
        for _ in 0..16 {
            assert_eq!(s1.next_u64(), s2.next_u64());
        }
    }

    #[test]
    fn tag_order_matters() {
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
    }
}
