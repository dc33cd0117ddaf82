//! Seeded random streams.
//!
//! Every stochastic component draws from its own `Xoshiro256PlusPlus`
//! stream. A stream is identified by `(master_seed, stream_id)` and seeded
//! with
//!
//! ```text
//! seed = splitmix64(master_seed ^ splitmix64(stream_id))
//! ```
//!
//! followed by the generator's own `seed_from_u64` expansion. Results are
//! therefore a pure function of the master seed and the stream layout, never
//! of scheduling or thread count.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Stream = Xoshiro256PlusPlus;

/// Stream id reserved for swap decisions in a replica grid.
pub const SWAP_STREAM: u64 = u64::MAX;

/// One step of the SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of sub-stream `stream_id` from `master_seed`.
pub fn derive_seed(master_seed: u64, stream_id: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(stream_id))
}

pub fn stream(master_seed: u64, stream_id: u64) -> Stream {
    Stream::seed_from_u64(derive_seed(master_seed, stream_id))
}
