//! Seeding scheme.
//!
//! Every random draw descends from one 64-bit master seed. Run `i` of an
//! experiment uses the seed `master ^ i`; inside a run, independent purposes
//! (data generation, fold assignment, ...) use separate ChaCha streams of
//! that seed so adding draws to one purpose never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

/// Stream ids for the purposes that draw randomness inside a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Generator = 0,
    Folds = 1,
    Concentration = 2,
    Power = 3,
    Test = 4,
}

pub fn run_seed(master: u64, run: u64) -> u64 {
    master ^ run
}

pub fn stream(seed: u64, purpose: Purpose) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}
