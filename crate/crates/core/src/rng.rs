//! Counter-based random draws.
//!
//! A draw is addressed by `(domain, counter, slot)`: the ChaCha8 key comes
//! from the run seed, the stream number from `domain` and `counter` (usually
//! the step index), and the word position from `slot` (usually the unit or
//! neuron index). The same address always yields the same value, so the
//! order in which workers consume draws never changes a result.

use rand::distr::Open01;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Purpose tag folded into the stream number.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Domain {
    /// Per-step draws: slot 0 is the random-scan choice, slot `k + 1` the
    /// Bernoulli draw of stream `k`.
    Step = 0,
    /// Initial variational parameters.
    InitTheta = 1,
    /// Initial samples drawn from the initial parameters.
    InitSample = 2,
    /// Per-trial seeds for ensembles.
    Trial = 3,
    /// Free-form Monte Carlo used by checks and experiments.
    MonteCarlo = 4,
    /// Random multi-start points for fixed-point search.
    Start = 5,
}

const COUNTER_BITS: u32 = 56;

#[derive(Clone, Debug)]
pub struct CounterRng {
    seed: u64,
    base: ChaCha8Rng,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Opens the stream for `(domain, counter)`.
    pub fn stream(&self, domain: Domain, counter: u64) -> DrawStream {
        debug_assert!(counter < (1 << COUNTER_BITS));
        let mut rng = self.base.clone();
        rng.set_stream(((domain as u64) << COUNTER_BITS) | (counter & ((1 << COUNTER_BITS) - 1)));
        DrawStream { rng }
    }

    /// Convenience for a single draw in `[0, 1)`.
    pub fn uniform(&self, domain: Domain, counter: u64, slot: u64) -> f64 {
        self.stream(domain, counter).uniform(slot)
    }

    /// A derived 64-bit seed, e.g. for per-trial generators.
    pub fn derive_seed(&self, domain: Domain, counter: u64) -> u64 {
        self.stream(domain, counter).next_u64_at(0)
    }
}

/// One stream of a [`CounterRng`]; slots are random-access.
#[derive(Clone, Debug)]
pub struct DrawStream {
    rng: ChaCha8Rng,
}

impl DrawStream {
    fn seek(&mut self, slot: u64) {
        let target = u128::from(slot) * 2;
        let current = self.rng.get_word_pos();
        if target == current {
            return;
        }
        // Short forward hops stay inside the buffered block.
        if target > current && target - current <= 32 {
            for _ in 0..(target - current) {
                self.rng.next_u32();
            }
        } else {
            self.rng.set_word_pos(target);
        }
    }

    /// Uniform in `[0, 1)` at `slot`.
    pub fn uniform(&mut self, slot: u64) -> f64 {
        self.seek(slot);
        self.rng.random::<f64>()
    }

    /// Uniform in `(0, 1)` at `slot`.
    pub fn open01(&mut self, slot: u64) -> f64 {
        self.seek(slot);
        self.rng.sample(Open01)
    }

    pub fn next_u64_at(&mut self, slot: u64) -> u64 {
        self.seek(slot);
        self.rng.next_u64()
    }
}

/// Bernoulli draw convention shared by every engine: success iff `r < p`.
#[inline]
pub fn bernoulli(r: f64, p: f64) -> bool {
    r < p
}
