//! Deterministic randomness.
//!
//! Every trial gets its own stream: `trial_seed = mix(master_seed, index)`
//! with a splitmix64 finalizer, then a ChaCha8 generator seeded from that.
//! Trials are therefore reproducible independently of scheduling order.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 output function; a bijective finalizer on u64.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of trial `index` from the master seed.
#[inline]
pub fn trial_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// The generator used everywhere in the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Buffered uniform direction sampler for `Z^d`.
///
/// A step of the walk needs `ceil(log2(2d))` random bits; draws come out of
/// a 64-bit buffer refilled from the generator, with rejection when `2d` is
/// not a power of two. Direction `k` encodes axis `k >> 1` and sign
/// `+1` for even `k`, `-1` for odd `k`.
#[derive(Clone, Debug)]
pub struct DirectionSampler {
    buf: u64,
    left: u32,
    bits: u32,
    mask: u64,
    ndir: u64,
}

impl DirectionSampler {
    pub fn new(dimension: u32) -> Self {
        assert!((1..=8).contains(&dimension));
        let ndir = 2 * dimension as u64;
        let bits = 64 - (ndir - 1).leading_zeros();
        DirectionSampler {
            buf: 0,
            left: 0,
            bits,
            mask: (1u64 << bits) - 1,
            ndir,
        }
    }

    #[inline(always)]
    pub fn next(&mut self, rng: &mut ChaCha8Rng) -> u32 {
        loop {
            if self.left < self.bits {
                self.buf = rng.next_u64();
                self.left = 64;
            }
            let v = self.buf & self.mask;
            self.buf >>= self.bits;
            self.left -= self.bits;
            if v < self.ndir {
                return v as u32;
            }
        }
    }
}
