mod common;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use secgraph::graph::{random_names, Oracle};
use secgraph::protocol::Protocol;

use common::core;

#[test]
fn substring_search_never_misses() {
    for protocol in Protocol::ALL {
        let mut core = core(protocol, 2);
        let names = random_names(40, 3);
        let mut oracle = Oracle::default();
        for (id, name) in &names {
            core.insert_name(*id, name).unwrap();
            oracle.set_name(*id, name);
        }
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut exact = 0;
        for _ in 0..60 {
            let (id, name) = names.iter().nth(rng.gen_range(0..names.len())).unwrap();
            let full: Vec<char> = format!("#{name}$").chars().collect();
            let len = rng.gen_range(2..=full.len());
            let start = rng.gen_range(0..=full.len() - len);
            let query: String = full[start..start + len].iter().collect();
            let got: BTreeSet<u64> = core.search_substring(&query).unwrap().into_iter().collect();
            let want = oracle.substring(&query);
            assert!(want.contains(id));
            assert!(want.is_subset(&got), "{protocol} {query:?}: {got:?} vs {want:?}");
            exact += usize::from(got == want);
        }
        assert!(exact > 50, "{protocol}: {exact} exact answers");
        // renaming removes every old sub-string
        let (id, name) = names.iter().next().unwrap();
        core.delete_name(*id, name).unwrap();
        core.insert_name(*id, "zq").unwrap();
        assert_eq!(core.search_substring("#zq$").unwrap(), vec![*id]);
        assert!(!core.search_substring(&format!("#{name}$")).unwrap().contains(id));
    }
}
