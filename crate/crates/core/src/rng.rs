//! Deterministic random-stream derivation.
//!
//! Every sampled trajectory is keyed by `(seed, query_id, stage, epoch)` so
//! results are independent of worker scheduling: two runs with the same seed
//! produce bit-identical chains no matter how queries are distributed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix_bytes(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ bytes.len() as u64)
}

/// RNG for the chain at `(seed, query_id, stage, epoch)`.
pub fn chain_rng(seed: u64, query_id: &str, stage: u64, epoch: u64) -> ChaCha8Rng {
    let mut h = splitmix64(seed ^ 0x243F_6A88_85A3_08D3);
    h = mix_bytes(h, query_id.as_bytes());
    h = splitmix64(h ^ stage);
    h = splitmix64(h ^ epoch);
    ChaCha8Rng::seed_from_u64(h)
}

/// RNG for a named purpose that is not tied to a query (epoch shuffles,
/// synthetic data, train/test splits).
pub fn labeled_rng(seed: u64, label: &str) -> ChaCha8Rng {
    let mut h = splitmix64(seed ^ 0x1319_8A2E_0370_7344);
    h = mix_bytes(h, label.as_bytes());
    ChaCha8Rng::seed_from_u64(h)
}
