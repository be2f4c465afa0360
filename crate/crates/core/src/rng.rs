//! Deterministic seed fan-out.
//!
//! A single root seed expands into per-stage and per-item streams via
//! SplitMix64 mixing, so adding a stage or parallelizing over items never
//! perturbs the randomness other stages observe.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// Pipeline stages with fixed sub-seed slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Reconstruct = 1,
    Simulate = 2,
    Evaluate = 3,
    Stats = 4,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Mix a root seed with an arbitrary chain of indices.
pub fn mix(root: u64, indices: &[u64]) -> u64 {
    let mut state = splitmix64(root);
    for &i in indices {
        state = splitmix64(state ^ splitmix64(i));
    }
    state
}

/// Sub-seed for a pipeline stage.
pub fn stage_seed(root: u64, stage: Stage) -> u64 {
    mix(root, &[stage as u64])
}

/// Counter-based per-item generator: identical for a given (seed, index)
/// pair no matter which thread evaluates it.
pub fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, &[index]))
}
