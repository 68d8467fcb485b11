mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use secgraph::graph::{keyword, Oracle};
use secgraph::protocol::Protocol;
use secgraph::trusted::TrustedCore;
use secgraph::Error;

use common::{config, core, core_with};

#[derive(Debug, Clone)]
enum Op {
    Insert(u64, u64),
    Delete(u64, u64),
    Search(Vec<u64>),
    Hop(u64, usize),
}

fn check_structure(core: &TrustedCore) {
    let total = core.state().total_count() as usize;
    let leaves = core.state().tree().leaves();
    core.with_store(|store| {
        assert_eq!(store.tset_len(), total);
        if core.protocol().is_verifiable() {
            assert_eq!(store.itset_len(), total);
        }
        let mut tree = leaves.clone();
        tree.sort();
        assert_eq!(store.xset_leaves(), tree);
    });
}

/// Applies `op` to both sides and compares.
fn step(core: &mut TrustedCore, oracle: &mut Oracle, op: &Op) {
    match op {
        Op::Insert(v, u) => {
            let w = keyword(*v, "friend");
            let fresh = oracle.insert(&w, *u, 1);
            match core.insert(&w, *u, 1) {
                Ok(()) => assert!(fresh, "accepted duplicate {w} {u}"),
                Err(Error::Duplicate) => assert!(!fresh, "rejected fresh {w} {u}"),
                Err(e) => panic!("insert {w} {u}: {e}"),
            }
        }
        Op::Delete(v, u) => {
            let w = keyword(*v, "friend");
            let present = oracle.delete(&w, *u);
            match core.delete(&w, *u) {
                Ok(()) => assert!(present, "deleted absent {w} {u}"),
                Err(Error::NotFound(_)) => assert!(!present, "missed present {w} {u}"),
                Err(e) => panic!("delete {w} {u}: {e}"),
            }
        }
        Op::Search(vs) => {
            let ws: Vec<String> = vs.iter().map(|v| keyword(*v, "friend")).collect();
            let refs: Vec<&str> = ws.iter().map(String::as_str).collect();
            let got: BTreeSet<u64> = core.search_conjunctive(&refs).unwrap().into_iter().collect();
            let want = oracle.intersect(&refs);
            assert!(want.is_subset(&got), "false negative for {refs:?}: {got:?} vs {want:?}");
            if vs.len() == 1 {
                assert_eq!(got, want);
            }
        }
        Op::Hop(v, k) => {
            let got: BTreeSet<u64> = core
                .search_single(&keyword(*v, "friend"), *k)
                .unwrap()
                .into_iter()
                .collect();
            assert_eq!(got, oracle.khop(*v, "friend", *k));
        }
    }
    check_structure(core);
    assert_eq!(core.state().total_count() as usize, oracle.size());
}

fn random_op(rng: &mut ChaCha20Rng, vertices: u64) -> Op {
    let v = rng.gen_range(0..vertices);
    match rng.gen_range(0..10) {
        0..=4 => Op::Insert(v, rng.gen_range(0..vertices)),
        5..=7 => Op::Delete(v, rng.gen_range(0..vertices)),
        8 => Op::Search((0..rng.gen_range(1..=4)).map(|_| rng.gen_range(0..vertices)).collect()),
        _ => Op::Hop(v, rng.gen_range(1..=3)),
    }
}

#[test]
fn random_interleaving_matches_oracle() {
    for protocol in Protocol::ALL {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut core = core(protocol, 3);
        let mut oracle = Oracle::default();
        for _ in 0..600 {
            step(&mut core, &mut oracle, &random_op(&mut rng, 12));
        }
        assert!(core.stats().splits > 0, "{protocol}: workload should split");
    }
}

#[test]
fn delete_to_empty_then_reinsert() {
    for protocol in Protocol::ALL {
        let mut core = core(protocol, 5);
        let mut oracle = Oracle::default();
        for u in 0..20 {
            step(&mut core, &mut oracle, &Op::Insert(1, u));
        }
        for u in (0..20).rev().step_by(3).chain((0..20).filter(|u| u % 3 != 1)) {
            step(&mut core, &mut oracle, &Op::Delete(1, u));
        }
        step(&mut core, &mut oracle, &Op::Search(vec![1]));
        assert_eq!(core.state().update_count(0, "1:friend"), 0);
        core.with_store(|s| assert_eq!(s.tset_len(), 0));
        if protocol.is_verifiable() {
            assert!(core.state().digest(0, "1:friend").is_none());
        }
        for u in [7, 3, 7] {
            step(&mut core, &mut oracle, &Op::Insert(1, u));
        }
        step(&mut core, &mut oracle, &Op::Search(vec![1]));
        assert_eq!(core.search_conjunctive(&["1:friend"]).unwrap(), vec![7, 3]);
    }
}

#[test]
fn insert_then_delete_restores_answers() {
    for protocol in Protocol::ALL {
        let mut core = core(protocol, 9);
        for u in 0..30 {
            core.insert("1:friend", u, u).unwrap();
            core.insert("2:friend", u * 2, 1).unwrap();
        }
        let before = core.search_conjunctive(&["1:friend", "2:friend"]).unwrap();
        let tset = core.with_store(|s| s.tset_len());
        core.insert("1:friend", 100, 1).unwrap();
        core.insert("2:friend", 100, 1).unwrap();
        assert!(core.search_conjunctive(&["1:friend", "2:friend"]).unwrap().contains(&100));
        core.delete("1:friend", 100).unwrap();
        core.delete("2:friend", 100).unwrap();
        assert_eq!(core.search_conjunctive(&["1:friend", "2:friend"]).unwrap(), before);
        assert_eq!(core.with_store(|s| s.tset_len()), tset);
    }
}

#[test]
fn large_keyword_forces_splits_and_stays_consistent() {
    for protocol in Protocol::ALL {
        let mut core = core_with(config(protocol, 16), 1);
        let mut oracle = Oracle::default();
        for u in 0..300 {
            step(&mut core, &mut oracle, &Op::Insert(u % 3, u));
        }
        assert!(core.state().tree().leaf_count() > 4, "{protocol}");
        let splits = core.stats().splits;
        core.with_store(|s| {
            if protocol == Protocol::SecGraph {
                assert_eq!(s.split_count(), splits);
            }
        });
        for u in (0..300).step_by(2) {
            step(&mut core, &mut oracle, &Op::Delete(u % 3, u));
        }
        step(&mut core, &mut oracle, &Op::Search(vec![0, 1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn any_op_sequence_keeps_invariants(
        seed in any::<u64>(),
        ops in prop::collection::vec((0u8..4, 0u64..6, 0u64..6, 1usize..3), 1..60),
        pick in 0usize..3,
    ) {
        let protocol = Protocol::ALL[pick];
        let mut core = core(protocol, seed);
        let mut oracle = Oracle::default();
        for (kind, v, u, k) in ops {
            let op = match kind {
                0 | 1 => Op::Insert(v, u),
                2 => Op::Delete(v, u),
                _ => if k == 1 { Op::Search(vec![v, u]) } else { Op::Hop(v, k) },
            };
            step(&mut core, &mut oracle, &op);
        }
    }
}
