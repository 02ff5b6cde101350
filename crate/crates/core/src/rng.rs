//! Counter-keyed random streams.
//!
//! Every event draws from its own generator seeded by a hash of
//! `(seed, stream, event)`, so the numbers an event sees do not depend on
//! which worker evaluates it or in what order.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type EventRng = Xoshiro256PlusPlus;

// splitmix64 finaliser
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of `(seed, stream, event)` used as the per-event seed.
#[inline]
pub fn event_key(seed: u64, stream: u64, event: u64) -> u64 {
    let mut h = mix64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    h = mix64(h ^ stream.wrapping_mul(0xd6e8_feb8_6659_fd93));
    mix64(h ^ event.wrapping_mul(0xa076_1d64_78bd_642f))
}

#[inline]
pub fn event_rng(seed: u64, stream: u64, event: u64) -> EventRng {
    Xoshiro256PlusPlus::seed_from_u64(event_key(seed, stream, event))
}
