//! Keyed deterministic random streams.
//!
//! Each consumer (a transmit channel, a microphone) gets its own ChaCha
//! stream selected by index, so results do not depend on iteration order or
//! on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream-id namespaces so that e.g. channel 3's phases and mic 3's noise
/// never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Phase = 1,
    Noise = 2,
    Blocking = 3,
}

pub fn keyed_rng(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 48) ^ index);
    rng
}
