//! Seeded ChaCha streams. Every consumer of randomness owns a distinct
//! `(seed, stream)` pair so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const ENV_STREAM: u64 = 1;
/// Replica `r` of a Monte Carlo run draws from stream `REPLICA_BASE + r`.
pub const REPLICA_BASE: u64 = 1 << 32;
pub const AUX_BASE: u64 = 1 << 48;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn replica_stream(seed: u64, replica: u64) -> ChaCha8Rng {
    stream(seed, REPLICA_BASE + replica)
}
