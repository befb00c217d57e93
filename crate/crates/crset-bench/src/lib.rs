//! Shared fixtures for the criterion benches.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crset_core::{build_cascade, CascadeParams, FilterCascade, IdSets, RevocationId};

/// Deterministic half-revoked instance at the given capacity.
pub fn fixture(n_max: u64) -> (IdSets, CascadeParams, ChaCha20Rng) {
    let mut rng = ChaCha20Rng::seed_from_u64(n_max ^ 0xbe9c);
    let sets = IdSets::random(n_max / 2, n_max / 2, &mut rng);
    (sets, CascadeParams::new(n_max), rng)
}

/// A built cascade plus ids to probe: half known-valid, half known-revoked.
pub fn built_fixture(n_max: u64) -> (FilterCascade, Vec<RevocationId>) {
    let (sets, params, mut rng) = fixture(n_max);
    let cascade = build_cascade(&sets, &params, &mut rng).expect("fixture build converges");
    let probes: Vec<RevocationId> = sets
        .valid
        .iter()
        .take(500)
        .chain(sets.revoked.iter().take(500))
        .copied()
        .collect();
    (cascade, probes)
}
