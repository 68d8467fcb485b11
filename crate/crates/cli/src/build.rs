use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use secgraph::graph::{shuffled, Oracle, PlainGraph, Posting};
use secgraph::protocol::Protocol;
use secgraph::trusted::TrustedCore;
use serde::Serialize;

use crate::{engine, BenchConfig, CliError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildRow {
    pub protocol: String,
    pub fraction: f64,
    /// Edges streamed, i.e. floor(fraction * accepted edges).
    pub edges: usize,
    /// Postings inserted (two per undirected edge).
    pub postings: usize,
    /// Duplicate input edges dropped by the parser.
    pub duplicates: usize,
    pub names: usize,
    pub elapsed_ms: f64,
    pub splits: u64,
    pub subfilters: usize,
    pub boundary_calls: u64,
    pub verify_ms: f64,
    pub deletes: usize,
    pub churn_ms: f64,
    /// Churn searches whose answer differed from the plaintext oracle.
    pub mismatches: usize,
    pub forward_violations: u64,
    pub backward_violations: u64,
}

/// Streams the dataset into a fresh encrypted database once per
/// (protocol, fraction) and reports build statistics.
pub fn cmd_build(cfg: &BenchConfig) -> Result<Vec<BuildRow>, CliError> {
    cfg.validate()?;
    let graph = cfg
        .load_dataset()?
        .ok_or_else(|| CliError::Config("build needs --dataset".into()))?;
    let acc = if cfg.protocol.iter().any(|p| p.uses_accumulator()) {
        Some(cfg.accumulator()?)
    } else {
        None
    };
    let mut edges = graph.edges();
    if cfg.shuffle {
        edges = shuffled(&edges, cfg.seed);
    }
    let mut rows = Vec::new();
    for &protocol in &cfg.protocol {
        for &fraction in &cfg.fraction {
            let take = (fraction * edges.len() as f64).floor() as usize;
            rows.push(build_one(cfg, protocol, fraction, &graph, &edges[..take], acc.as_ref())?);
        }
    }
    Ok(rows)
}

fn build_one(
    cfg: &BenchConfig,
    protocol: Protocol,
    fraction: f64,
    graph: &PlainGraph,
    edges: &[&[Posting]],
    acc: Option<&secgraph::verify::Accumulator>,
) -> Result<BuildRow, CliError> {
    let mut core = cfg.core(protocol, acc)?;
    core.with_store(|s| s.enable_audit());
    let mut oracle = Oracle::default();
    let start = Instant::now();
    let mut postings = Vec::new();
    for p in edges.iter().flat_map(|e| e.iter()) {
        let w = p.keyword();
        core.insert(&w, p.dst, p.weight).map_err(engine(&format!("insert ({w}, {})", p.dst)))?;
        oracle.insert(&w, p.dst, p.weight);
        postings.push(p);
    }
    for (id, name) in &graph.names {
        core.insert_name(*id, name).map_err(engine(&format!("index name of {id}")))?;
    }
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let built = core.stats();
    check_structure(&core)?;

    let start = Instant::now();
    let deletes = (cfg.churn * postings.len() as f64).floor() as usize;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0xc4e7);
    let mut touched = BTreeSet::new();
    for i in sample(&mut rng, postings.len(), deletes).into_vec() {
        let p = postings[i];
        let w = p.keyword();
        core.delete(&w, p.dst).map_err(engine(&format!("delete ({w}, {})", p.dst)))?;
        oracle.delete(&w, p.dst);
        touched.insert(w);
    }
    let mut mismatches = 0;
    for w in &touched {
        let got: BTreeSet<u64> = core
            .search_conjunctive(&[w.as_str()])
            .map_err(engine(&format!("search {w}")))?
            .into_iter()
            .collect();
        mismatches += usize::from(got != oracle.list(w).into_iter().collect());
    }
    let churn_ms = start.elapsed().as_secs_f64() * 1e3;
    check_structure(&core)?;

    let audit = core.with_store(|s| s.audit().cloned().unwrap_or_default());
    Ok(BuildRow {
        protocol: protocol.to_string(),
        fraction,
        edges: edges.len(),
        postings: postings.len(),
        duplicates: graph.duplicates,
        names: graph.names.len(),
        elapsed_ms,
        splits: built.splits,
        subfilters: core.state().tree().leaf_count(),
        boundary_calls: built.boundary_calls,
        verify_ms: built.verify_time().as_secs_f64() * 1e3,
        deletes,
        churn_ms,
        mismatches,
        forward_violations: audit.forward_violations,
        backward_violations: audit.backward_violations,
    })
}

/// Counter cross-checks between the trusted core and the store.
fn check_structure(core: &TrustedCore) -> Result<(), CliError> {
    let splits = core.stats().splits;
    let leaves = core.state().tree().leaf_count();
    let total = core.state().total_count() as usize;
    let (tset, store_splits, store_leaves) =
        core.with_store(|s| (s.tset_len(), s.split_count(), s.xset_leaves().len()));
    if tset != total {
        return Err(CliError::Invariant(format!("tset holds {tset} entries, counters sum to {total}")));
    }
    if store_leaves != leaves || leaves as u64 != splits + 1 {
        return Err(CliError::Invariant(format!(
            "split counter {splits} disagrees with {leaves} trusted and {store_leaves} stored sub-filters"
        )));
    }
    if core.protocol() == Protocol::SecGraph && store_splits != splits {
        return Err(CliError::Invariant(format!(
            "trusted split counter {splits} differs from the store's {store_splits}"
        )));
    }
    Ok(())
}
