//! Hierarchical deterministic random streams.
//!
//! Every random draw in the simulator comes from a stream identified by its
//! lineage `(master_seed, purpose_tag, round, client_id)`. The lineage is
//! hashed into a 256-bit ChaCha8 key:
//!
//! 1. the tag is folded with 64-bit FNV-1a,
//! 2. `state = splitmix64(master_seed)`, then `state = splitmix64(state ^ x)` for
//!    `x` in `[tag_hash, round, client_id]`,
//! 3. the key is four successive splitmix64 outputs seeded by `state`,
//!    written little-endian.
//!
//! Streams are never shared; each unit of work derives its own, so the
//! draws a task sees do not depend on which thread runs it or when.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Identity of a random stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Lineage {
    pub master_seed: u64,
    pub purpose_tag: String,
    pub round: u64,
    pub client_id: u64,
}

#[derive(Debug, Clone)]
pub struct RngStream {
    lineage: Lineage,
    inner: ChaCha8Rng,
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn lineage_key(lineage: &Lineage) -> [u8; 32] {
    let mut state = splitmix64(lineage.master_seed);
    for x in [fnv1a(lineage.purpose_tag.as_bytes()), lineage.round, lineage.client_id] {
        state = splitmix64(state ^ x);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// Derives the stream for a lineage. Pure function of its arguments.
pub fn derive_stream(master_seed: u64, purpose_tag: &str, round: u64, client_id: u64) -> RngStream {
    let lineage = Lineage {
        master_seed,
        purpose_tag: purpose_tag.to_owned(),
        round,
        client_id,
    };
    let inner = ChaCha8Rng::from_seed(lineage_key(&lineage));
    RngStream { lineage, inner }
}

impl RngStream {
    pub fn lineage(&self) -> &Lineage {
        &self.lineage
    }

    /// Uniform real in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// A shuffled copy of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
