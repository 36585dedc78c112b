//! Randomness used by neurons and channels.
//!
//! Every stochastic draw goes through [`Sampler`], so the same rollout code
//! runs on a seeded RNG or on a scripted trajectory during exhaustive
//! enumeration.

use rand::Rng;
use rand_distr::StandardNormal;

/// Probabilities below this are sampled as exact zeros.
pub const MIN_PROBABILITY: f64 = 1e-300;

pub trait Sampler {
    /// Draws a binary outcome that is 1 with probability `p`.
    fn bernoulli(&mut self, p: f64) -> u8;

    fn standard_normal(&mut self) -> f64;
}

/// Outcome of `bernoulli(p)` when it is fixed regardless of randomness.
#[inline]
pub fn forced_outcome(p: f64) -> Option<u8> {
    if p < MIN_PROBABILITY {
        Some(0)
    } else if p >= 1.0 {
        Some(1)
    } else {
        None
    }
}

impl<R: Rng + ?Sized> Sampler for R {
    #[inline]
    fn bernoulli(&mut self, p: f64) -> u8 {
        match forced_outcome(p) {
            Some(s) => s,
            None => u8::from(self.random::<f64>() < p),
        }
    }

    #[inline]
    fn standard_normal(&mut self) -> f64 {
        self.sample(StandardNormal)
    }
}

/// Replays a fixed bit pattern for every non-forced Bernoulli draw and tracks
/// the probability of the realised trajectory.
#[derive(Clone, Debug)]
pub struct ScriptedSampler {
    bits: u64,
    consumed: usize,
    probability: f64,
}

impl ScriptedSampler {
    pub fn new(bits: u64) -> Self {
        ScriptedSampler {
            bits,
            consumed: 0,
            probability: 1.0,
        }
    }

    /// Number of free binary choices taken so far.
    pub fn consumed(&self) -> usize {
        self.consumed
    }

    /// Product of the probabilities of every scripted outcome.
    pub fn probability(&self) -> f64 {
        self.probability
    }
}

impl Sampler for ScriptedSampler {
    fn bernoulli(&mut self, p: f64) -> u8 {
        if let Some(s) = forced_outcome(p) {
            return s;
        }
        assert!(self.consumed < 64, "scripted sampler exhausted");
        let s = ((self.bits >> self.consumed) & 1) as u8;
        self.consumed += 1;
        self.probability *= if s == 1 { p } else { 1.0 - p };
        s
    }

    fn standard_normal(&mut self) -> f64 {
        panic!("scripted sampler only replays binary outcomes; use a channel whose law is sampled bitwise")
    }
}

/// SplitMix64 finaliser, used to derive independent stream seeds.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
