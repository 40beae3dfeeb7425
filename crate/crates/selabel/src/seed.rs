//! Deterministic seed derivation.
//!
//! Every random stage of the pipeline (simulation, fold shuffles, judge
//! assignment, replication loops) draws from a ChaCha stream whose seed is
//! derived from the user-facing master seed plus a fixed list of integer
//! tags identifying the stage. The derivation is a SplitMix64 chain, so the
//! same master seed and tag path always produce the same stream, independent
//! of thread scheduling or platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One SplitMix64 step: advances the state and returns the next output.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a path of stage tags.
///
/// The rule is fixed: fold each tag into a SplitMix64 chain seeded by the
/// master seed. Distinct tag paths give independent-looking child seeds.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = master;
    let mut out = splitmix64(&mut state);
    for &t in tags {
        state ^= t.wrapping_mul(0xA24B_AED4_963E_E407);
        out = splitmix64(&mut state);
    }
    out
}

/// Deterministic RNG for the stage identified by `tags` under `master`.
pub fn rng_from(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}
