//! Counter-based random substreams.
//!
//! Every draw is addressed by `(master seed, purpose, index, counter)`: the
//! master seed and purpose select a ChaCha key, the index selects the ChaCha
//! stream and the counter a fixed offset inside it. Results therefore do not
//! depend on the order in which particles or paths are processed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Words reserved inside a stream for one counter value.
const WORDS_PER_COUNTER: u128 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    InitialLaw,
    ParticleStep,
    Mollifier,
    BankGaussians,
    BankInitial,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::InitialLaw => 0x9e37_79b9_7f4a_7c15,
            Purpose::ParticleStep => 0xbf58_476d_1ce4_e5b9,
            Purpose::Mollifier => 0x94d0_49bb_1331_11eb,
            Purpose::BankGaussians => 0xd6e8_feb8_6659_fd93,
            Purpose::BankInitial => 0xa076_1d64_78bd_642f,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of an independent family derived from a master seed.
pub fn derive_seed(master_seed: u64, purpose: Purpose, epoch: u64) -> u64 {
    splitmix(splitmix(master_seed ^ purpose.tag()) ^ epoch)
}

#[derive(Debug, Clone)]
pub struct Substreams {
    base: ChaCha8Rng,
}

impl Substreams {
    pub fn new(master_seed: u64, purpose: Purpose) -> Self {
        Self::with_epoch(master_seed, purpose, 0)
    }

    /// Independent family of streams for the same purpose, e.g. one per
    /// fixed-point iterate when random numbers are not shared.
    pub fn with_epoch(master_seed: u64, purpose: Purpose, epoch: u64) -> Self {
        Self {
            base: ChaCha8Rng::seed_from_u64(derive_seed(master_seed, purpose, epoch)),
        }
    }

    /// Generator positioned at `(index, counter)`.
    pub fn at(&self, index: u64, counter: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(index);
        rng.set_word_pos(counter as u128 * WORDS_PER_COUNTER);
        rng
    }

    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        self.at(index, 0)
    }
}

#[inline]
pub fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform on `(0, 1]`, safe as the argument of a logarithm.
#[inline]
pub fn open_uniform(rng: &mut impl Rng) -> f64 {
    1.0 - rng.random::<f64>()
}
