mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use secgraph::graph::keyword;
use secgraph::protocol::Protocol;
use secgraph::store::AdversaryMode;
use secgraph::trusted::TrustedCore;
use secgraph::Error;

use common::core;

const VERTICES: u64 = 10;

fn populated(protocol: Protocol, seed: u64) -> TrustedCore {
    let mut core = core(protocol, seed);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for _ in 0..150 {
        let _ = core.insert(&keyword(rng.gen_range(0..VERTICES), "friend"), rng.gen_range(0..40), 1);
    }
    core
}

/// One random operation; `Err` carries the error it raised.
fn random_round(core: &mut TrustedCore, rng: &mut ChaCha20Rng) -> Result<(), Error> {
    let v = rng.gen_range(0..VERTICES);
    let w = keyword(v, "friend");
    let outcome = match rng.gen_range(0..5) {
        0 => core.insert(&w, rng.gen_range(0..40), 1),
        1 => core.delete(&w, rng.gen_range(0..40)),
        2 => core.search_single(&w, 2).map(drop),
        _ => {
            let ws: Vec<String> = (0..rng.gen_range(1..=3))
                .map(|_| keyword(rng.gen_range(0..VERTICES), "friend"))
                .collect();
            let refs: Vec<&str> = ws.iter().map(String::as_str).collect();
            core.search_conjunctive(&refs).map(drop)
        }
    };
    match outcome {
        Err(Error::Duplicate) | Err(Error::NotFound(_)) => Ok(()),
        other => other,
    }
}

fn run_mode(protocol: Protocol, mode: AdversaryMode, rounds: usize) -> (usize, usize) {
    let mut core = populated(protocol, 21);
    core.with_store(|s| s.set_adversary(mode, 99));
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let (mut tampered, mut detected) = (0, 0);
    for _ in 0..rounds {
        core.clear_cache();
        core.with_store(|s| s.arm());
        let before = core.with_store(|s| s.deviations());
        let result = random_round(&mut core, &mut rng);
        let deviated = core.with_store(|s| {
            s.disarm();
            s.deviations() > before
        });
        if deviated {
            tampered += 1;
            match result {
                Err(Error::Integrity(_)) => detected += 1,
                other => panic!("{protocol} {mode}: undetected deviation: {other:?}"),
            }
        } else if let Err(e) = result {
            panic!("{protocol} {mode}: spurious error {e}");
        }
    }
    (tampered, detected)
}

#[test]
fn every_deviation_is_detected() {
    for protocol in [Protocol::VSecGraph, Protocol::VSecGraphA] {
        for mode in AdversaryMode::ALL.into_iter().filter(|m| *m != AdversaryMode::Honest) {
            let (tampered, detected) = run_mode(protocol, mode, 120);
            assert!(tampered > 10, "{protocol} {mode}: only {tampered} tampered rounds");
            assert_eq!(tampered, detected);
        }
    }
}

#[test]
fn honest_store_raises_nothing() {
    for protocol in Protocol::ALL {
        let (tampered, _) = run_mode(protocol, AdversaryMode::Honest, 300);
        assert_eq!(tampered, 0);
    }
}

#[test]
fn detected_rounds_leave_state_usable() {
    let mut core = populated(Protocol::VSecGraph, 2);
    core.with_store(|s| s.set_adversary(AdversaryMode::DropEntry, 1));
    let count = core.state().update_count(0, "1:friend");
    for id in 100..110 {
        core.with_store(|s| s.arm());
        let before = core.with_store(|s| s.deviations());
        let r = core.insert("1:friend", id, 1);
        let deviated = core.with_store(|s| s.deviations() > before);
        assert_eq!(deviated, r.is_err());
    }
    core.with_store(|s| s.set_adversary(AdversaryMode::Honest, 0));
    let expected = count + core.search_conjunctive(&["1:friend"]).unwrap().iter().filter(|id| **id >= 100).count() as u64;
    assert_eq!(core.state().update_count(0, "1:friend"), expected);
    assert_eq!(core.state().total_count() as usize, core.with_store(|s| s.tset_len()));
}

#[test]
fn plain_protocol_is_not_verifiable() {
    // A flipped record in the non-verifiable protocol surfaces as wrong data
    // or a decode failure, never as a checked violation of the digest.
    let mut core = populated(Protocol::SecGraph, 4);
    core.with_store(|s| {
        s.set_adversary(AdversaryMode::TamperTset, 3);
        s.arm();
    });
    let r = core.search_conjunctive(&["1:friend"]);
    assert!(!matches!(r, Err(Error::Integrity(secgraph::IntegrityCheck::PostingListDigest))));
}
