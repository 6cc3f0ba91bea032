//! Seed splitting for reproducible, replication-parallel simulation.
//!
//! Every random stream is a ChaCha8 generator keyed by the root seed
//! (expanded with `seed_from_u64`) and positioned on stream
//! `(replication << 8) | role`. ChaCha is counter based, so each
//! `(root, replication, role)` triple addresses an independent keystream
//! and a replication produces the same numbers no matter which thread runs
//! it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. At most 256 roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamRole {
    /// Error process innovations.
    Errors = 1,
    /// Bootstrap indices for resampled residuals.
    Bootstrap = 2,
}

/// Largest replication index that fits next to the role byte.
pub const MAX_REPLICATION: u64 = (1 << 56) - 1;

pub fn stream_rng(root_seed: u64, replication: u64, role: StreamRole) -> ChaCha8Rng {
    assert!(
        replication <= MAX_REPLICATION,
        "replication index {replication} too large"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream((replication << 8) | role as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn draws(root: u64, rep: u64, role: StreamRole) -> Vec<u64> {
        let mut r = stream_rng(root, rep, role);
        (0..4).map(|_| r.random()).collect()
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = draws(7, 3, StreamRole::Errors);
        assert_eq!(a, draws(7, 3, StreamRole::Errors));
        assert_ne!(a, draws(7, 4, StreamRole::Errors));
        assert_ne!(a, draws(7, 3, StreamRole::Bootstrap));
        assert_ne!(a, draws(8, 3, StreamRole::Errors));
    }

    #[test]
    fn pinned_first_draw() {
        // Guards the documented seed-splitting rule against silent changes.
        assert_eq!(draws(0, 0, StreamRole::Errors)[0], PINNED);
    }

    const PINNED: u64 = 13937087304575520531;
}
