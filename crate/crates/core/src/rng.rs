// SPDX-License-Identifier: Apache-2.0

//! Keyed deterministic random streams.
//!
//! Every random draw in the simulator comes from a ChaCha stream whose seed
//! is derived from a tuple of integer keys, so results never depend on the
//! order in which work units execute.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep streams for different purposes disjoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    FunctionalWire = 1,
    BranchWire = 2,
    PdnField = 3,
    LocalDrift = 4,
    Window = 5,
    UpsetPlan = 6,
    Subsets = 7,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds the keys into one 64-bit seed.
pub fn mix(seed: u64, domain: Domain, keys: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ 0x5851_F42D_4C95_7F2D);
    h = splitmix(h ^ domain as u64);
    for &k in keys {
        h = splitmix(h ^ k);
    }
    h
}

pub fn stream(seed: u64, domain: Domain, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, domain, keys))
}
