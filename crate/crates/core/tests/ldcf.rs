use std::collections::HashMap;

use proptest::prelude::*;
use secgraph::crypto::{fingerprint_bits, hash_h1};
use secgraph::ldcf::{FilterParams, Ldcf};

fn element(params: &FilterParams, x: u64) -> (u16, usize) {
    let bytes = x.to_le_bytes();
    (fingerprint_bits(&bytes, params.fingerprint_bits), params.bucket_of(hash_h1(&bytes)))
}

#[derive(Debug, Clone)]
enum Op {
    Insert(u64),
    Remove(u64),
}

fn ops() -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(
        prop_oneof![
            3 => (0..600u64).prop_map(Op::Insert),
            1 => (0..600u64).prop_map(Op::Remove),
        ],
        1..800,
    )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn no_false_negatives_and_consistent_tree(ops in ops(), buckets in prop::sample::select(vec![4usize, 8, 16])) {
        let params = FilterParams { bucket_count: buckets, ..FilterParams::default() };
        let mut ldcf = Ldcf::new(params).unwrap();
        let mut live: HashMap<u64, usize> = HashMap::new();
        for op in ops {
            match op {
                // more than 2·slot copies of one fingerprint can never be placed
                Op::Insert(x) if live.get(&x).copied().unwrap_or(0) < 2 => {
                    let (fp, mu) = element(&params, x);
                    ldcf.insert(fp, mu).unwrap();
                    *live.entry(x).or_default() += 1;
                }
                Op::Insert(_) => {}
                Op::Remove(x) => {
                    if let Some(c) = live.get_mut(&x).filter(|c| **c > 0) {
                        let (fp, mu) = element(&params, x);
                        prop_assert!(ldcf.remove(fp, mu));
                        *c -= 1;
                    }
                }
            }
        }
        for (x, c) in &live {
            if *c > 0 {
                let (fp, mu) = element(&params, *x);
                prop_assert!(ldcf.contains(fp, mu), "lost {}", x);
            }
        }
        let total: usize = live.values().sum();
        prop_assert_eq!(ldcf.len(), total);
        prop_assert_eq!(ldcf.filters().map(|f| f.len()).sum::<usize>(), total);
        prop_assert_eq!(ldcf.tree().leaf_count() as u64, ldcf.split_count() + 1);
        for f in ldcf.filters() {
            prop_assert_eq!(f.stored_bits(), params.fingerprint_bits - f.level());
        }
    }
}
