#![allow(dead_code)]

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use secgraph::ldcf::FilterParams;
use secgraph::protocol::Protocol;
use secgraph::trusted::{Config, TrustedCore};
use secgraph::verify::Accumulator;

/// One 1024-bit accumulator shared by every test in a binary; generating
/// safe primes dominates otherwise.
pub fn accumulator() -> Accumulator {
    static ACC: OnceLock<Accumulator> = OnceLock::new();
    ACC.get_or_init(|| {
        Accumulator::setup(1024, &mut ChaCha20Rng::seed_from_u64(0xacc)).expect("accumulator setup")
    })
    .clone()
}

/// Small sub-filters so splits happen at test scale.
pub fn config(protocol: Protocol, capacity: usize) -> Config {
    Config {
        filter: FilterParams::with_capacity(capacity),
        group_size: 8,
        ..Config::test_profile(protocol)
    }
}

pub fn core_with(config: Config, seed: u64) -> TrustedCore {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let acc = config.protocol.uses_accumulator().then(accumulator);
    TrustedCore::direct_with(config, acc, &mut rng).expect("setup")
}

pub fn core(protocol: Protocol, seed: u64) -> TrustedCore {
    core_with(config(protocol, 64), seed)
}

pub fn sorted(mut v: Vec<u64>) -> Vec<u64> {
    v.sort_unstable();
    v
}
