//! Counter-based keyed random streams.
//!
//! Every random draw in the codec is addressed by a [`StreamKey`] plus a
//! candidate index, so encoder and decoder regenerate identical values
//! without sharing any mutable generator state.

use rand_core::RngCore;
use rand_distr::{Distribution, Exp1, StandardNormal};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Purpose of a stream; keeps streams for different roles disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Domain {
    /// Initial `z_T` draw.
    Init = 1,
    /// PFR candidates.
    Candidate = 2,
    /// Poisson arrival times used by the PFR encoder.
    Arrival = 3,
    /// Decoder-side ancestral sampling noise.
    Denoise = 4,
    /// Synthetic data and test fixtures.
    Synthetic = 5,
}

/// Address of a random stream: `(base_seed, gop, step, chunk)` within a domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub base_seed: u64,
    pub gop: u32,
    pub step: u32,
    pub chunk: u32,
    pub domain: Domain,
}

impl StreamKey {
    pub const fn new(base_seed: u64, domain: Domain) -> Self {
        Self {
            base_seed,
            gop: 0,
            step: 0,
            chunk: 0,
            domain,
        }
    }

    pub const fn gop(mut self, gop: u32) -> Self {
        self.gop = gop;
        self
    }

    pub const fn step(mut self, step: u32) -> Self {
        self.step = step;
        self
    }

    pub const fn chunk(mut self, chunk: u32) -> Self {
        self.chunk = chunk;
        self
    }

    pub const fn domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    fn digest(&self) -> u64 {
        let mut h = mix64(self.base_seed ^ GOLDEN);
        h = mix64(h ^ (self.domain as u64).wrapping_mul(GOLDEN));
        h = mix64(h ^ u64::from(self.gop).wrapping_add(1).wrapping_mul(0xD6E8_FEB8_6659_FD93));
        h = mix64(h ^ u64::from(self.step).wrapping_add(1).wrapping_mul(0xA076_1D64_78BD_642F));
        mix64(
            h ^ u64::from(self.chunk)
                .wrapping_add(1)
                .wrapping_mul(0xE703_7ED1_A0B4_28DB),
        )
    }

    /// Generator for candidate `index` of this stream.
    pub fn rng(&self, index: u64) -> KeyedRng {
        KeyedRng {
            key: mix64(self.digest() ^ index.wrapping_mul(0x8EBC_6AF0_9C88_C6E3)),
            counter: 0,
        }
    }
}

/// SplitMix-style generator whose `i`-th output is a pure function of
/// `(key, i)`.
#[derive(Debug, Clone)]
pub struct KeyedRng {
    key: u64,
    counter: u64,
}

impl KeyedRng {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            key: mix64(seed),
            counter: 0,
        }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }

    #[inline]
    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(self)
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }
}

impl RngCore for KeyedRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
