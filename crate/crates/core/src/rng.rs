//! Seeded random streams.
//!
//! Every random draw comes from a ChaCha8 generator (counter-based, 64-bit
//! stream selector). A run is driven by one base seed:
//!
//! * trial `t` uses the seed `trial_seed(base, t)`;
//! * within a trial, parameter initialization uses stream
//!   `stream_id(INIT_EPOCH, layer)` and the `k`-th dropout mask drawn
//!   during epoch `e` uses stream `stream_id(e, k)`.
//!
//! Streams never depend on which thread runs a trial, so results are
//! identical for any worker count.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub type Rng = ChaCha8Rng;

/// Epoch tag reserved for parameter initialization streams.
pub const INIT_EPOCH: u64 = u64::MAX;

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn trial_seed(base: u64, trial: u64) -> u64 {
    splitmix64(base ^ splitmix64(trial.wrapping_add(1)))
}

pub fn stream_id(epoch: u64, site: u64) -> u64 {
    splitmix64(splitmix64(epoch) ^ site)
}

pub fn stream(seed: u64, epoch: u64, site: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(epoch, site));
    rng
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
#[inline]
pub fn uniform01(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `0..n` (`n > 0`), by rejection to avoid modulo bias.
pub fn below(rng: &mut impl RngCore, n: usize) -> usize {
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % n) as usize;
        }
    }
}

/// Per-trial factory handing out a fresh stream for every dropout site in
/// the order sites are visited during a forward pass.
#[derive(Debug, Clone)]
pub struct DropoutStreams {
    seed: u64,
    epoch: u64,
    next_site: u64,
}

impl DropoutStreams {
    pub fn new(seed: u64, epoch: u64) -> Self {
        Self {
            seed,
            epoch,
            next_site: 0,
        }
    }

    pub fn next(&mut self) -> Rng {
        let rng = stream(self.seed, self.epoch, self.next_site);
        self.next_site += 1;
        rng
    }
}
