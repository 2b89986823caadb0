// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded substreams.
//!
//! A campaign is driven by one `u64` seed. Each `(replication, stream)` pair
//! gets its own generator whose seed is a SplitMix64-style hash of
//! `(seed, replication, stream)`, so results never depend on which worker
//! thread happened to run a replication. Draws that belong to a replication
//! as a whole (the shared change point of the dependent model) use the
//! reserved stream id [`SHARED_STREAM`].

use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;

/// Per-substream generator. 16 bytes of state, cheap enough to hold one per
/// stream for a million streams.
pub type StreamRng = Pcg64Mcg;

/// Stream id reserved for replication-level draws.
pub const SHARED_STREAM: u64 = u64::MAX;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the 64-bit key of substream `(replication, stream)` under `seed`.
pub fn substream_key(seed: u64, replication: u64, stream: u64) -> u64 {
    let a = mix64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let b = mix64(a ^ replication.wrapping_mul(0xd1b5_4a32_d192_ed03));
    mix64(b ^ stream.wrapping_mul(0xaef1_7502_108e_f2d9).wrapping_add(0x632b_e59b_d9b4_e019))
}

pub fn substream(seed: u64, replication: u64, stream: u64) -> StreamRng {
    StreamRng::seed_from_u64(substream_key(seed, replication, stream))
}
