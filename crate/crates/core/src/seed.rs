//! Deterministic seed derivation.
//!
//! All randomness in the crate flows from a single master seed. Child
//! streams (replicates, chains, permutations) get their own generator via
//! `derive`, a splitmix64 mix of (master, index), so replicate i is
//! reproducible in isolation and independent of how many siblings ran.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche, cheap, stable across platforms.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for stream `index` under `master`.
pub fn derive(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(1)))
}

/// Generator for a seed. ChaCha8 is deterministic across platforms and fast
/// enough that cryptographic strength costs nothing here.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for child stream `index` under `master`.
pub fn child_rng(master: u64, index: u64) -> ChaCha8Rng {
    rng(derive(master, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derive_is_deterministic_and_spreads() {
        assert_eq!(derive(42, 0), derive(42, 0));
        assert_ne!(derive(42, 0), derive(42, 1));
        assert_ne!(derive(42, 0), derive(43, 0));
        // indices 0 and 1 under the same master should not collide with
        // masters 1 apart (catches xor-only mixing)
        assert_ne!(derive(42, 1), derive(43, 0));
    }

    #[test]
    fn rng_streams_reproduce() {
        let a: Vec<u64> = (0..4).map(|_| child_rng(7, 3).random()).collect();
        assert!(a.iter().all(|v| *v == a[0]));
    }
}
