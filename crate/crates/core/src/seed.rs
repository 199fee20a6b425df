//! Seed derivation.
//!
//! Every random decision in a run draws from its own stream, keyed by the run
//! seed, a step index and a purpose tag. Streams never depend on scheduling,
//! so serial and parallel execution produce identical artifacts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Concrete generator used everywhere. ChaCha is portable across platforms
/// and crate versions, unlike `StdRng`.
pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Split,
    LongTail,
    ValSubset,
    InitialLabels,
    Representation,
    ModelInit,
    Batching,
    McDropout,
    Query,
    PoolSubsample,
    Sweep,
    JointRound,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Split => 0x01,
            Purpose::LongTail => 0x02,
            Purpose::ValSubset => 0x03,
            Purpose::InitialLabels => 0x04,
            Purpose::Representation => 0x05,
            Purpose::ModelInit => 0x06,
            Purpose::Batching => 0x07,
            Purpose::McDropout => 0x08,
            Purpose::Query => 0x09,
            Purpose::PoolSubsample => 0x0a,
            Purpose::Sweep => 0x0b,
            Purpose::JointRound => 0x0c,
        }
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `hash64(run_seed, step, purpose)`.
pub fn derive(run_seed: u64, step: u64, purpose: Purpose) -> u64 {
    mix(mix(mix(run_seed) ^ step) ^ purpose.tag())
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn stream(run_seed: u64, step: u64, purpose: Purpose) -> Rng {
    rng(derive(run_seed, step, purpose))
}
