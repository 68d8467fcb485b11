//! Search latency and fault-injection workloads over synthesized keyword
//! families with a controlled intersection.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use secgraph::graph::{keyword, random_graph, Oracle, Posting};
use secgraph::protocol::Protocol;
use secgraph::store::AdversaryMode;
use secgraph::trusted::{Stats, TrustedCore};
use secgraph::verify::Accumulator;
use secgraph::Error;
use serde::Serialize;

use crate::report::{mean, median};
use crate::{engine, BenchConfig, CliError};

/// Family vertices and their ids live far above any dataset id.
const FAMILY_BASE: u64 = 1 << 40;
const ID_BASE: u64 = 1 << 41;
const FRESH_BASE: u64 = 1 << 42;
/// Keywords per conjunctive round in `verify`.
const VERIFY_N: usize = 3;

/// One CSV row of `search` or `verify`. Counter columns are per search in
/// `search` and summed over all rounds in `verify`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub protocol: String,
    pub adversary: String,
    pub rounds: usize,
    pub tampered: usize,
    pub n: usize,
    pub c: usize,
    pub elapsed_ms: f64,
    pub median_ms: f64,
    pub result_size: usize,
    pub decryptions: u64,
    pub membership_checks: u64,
    pub subfilters_loaded: u64,
    pub boundary_calls: u64,
    pub verify_ms: f64,
    pub detections: usize,
    /// Undetected sub-filter tampering, i.e. a flipped fingerprint that
    /// still answers every check the same way.
    pub collisions: usize,
    /// Undetected tampering of any other kind.
    pub misses: usize,
    /// Errors of any kind in rounds where the store did not deviate.
    pub false_alarms: usize,
    /// Accepted answers that disagree with the plaintext oracle.
    pub wrong_results: usize,
}

/// A populated database plus its plaintext twin.
pub struct Workload {
    pub core: TrustedCore,
    pub oracle: Oracle,
    /// Synthesized keywords, each with `posting_size` ids.
    pub families: Vec<String>,
    /// Ids present in every family keyword.
    pub shared: BTreeSet<u64>,
    /// Source vertices of background keywords.
    pub sources: Vec<u64>,
    /// Last id handed out to a fault-round insert.
    pub fresh: u64,
}

impl Workload {
    pub fn prepare(
        cfg: &BenchConfig,
        protocol: Protocol,
        acc: Option<&Accumulator>,
        families: usize,
    ) -> Result<Workload, CliError> {
        let mut core = cfg.core(protocol, acc)?;
        let mut oracle = Oracle::default();
        let background: Vec<Posting> = match cfg.load_dataset()? {
            Some(graph) => {
                let take = (cfg.fraction[0] * graph.edge_count() as f64).floor() as usize;
                graph.edges()[..take].iter().flat_map(|e| e.iter().cloned()).collect()
            }
            None => {
                let vertices = (cfg.background as u64 / 5).max(2);
                let mut postings: Vec<Posting> = random_graph(vertices, cfg.background, cfg.seed)
                    .into_iter()
                    .flat_map(|(a, b)| [(a, b), (b, a)])
                    .map(|(src, dst)| Posting {
                        src,
                        dst,
                        kind: "friend".into(),
                        weight: 1,
                    })
                    .collect();
                // grouped by keyword, as in a SNAP file
                postings.sort_by_key(|p| (p.src, p.dst));
                postings
            }
        };
        for p in &background {
            let w = p.keyword();
            core.insert(&w, p.dst, p.weight).map_err(engine(&format!("insert ({w}, {})", p.dst)))?;
            oracle.insert(&w, p.dst, p.weight);
        }
        let c = cfg.posting_size as u64;
        let overlap = cfg.overlap as u64;
        let shared: BTreeSet<u64> = (ID_BASE..ID_BASE + overlap).collect();
        let mut names = Vec::new();
        for j in 0..families as u64 {
            let w = keyword(FAMILY_BASE + j, "friend");
            let own = (0..c - overlap).map(|i| ID_BASE + overlap + j * c + i);
            for id in shared.iter().copied().chain(own) {
                core.insert(&w, id, 1).map_err(engine(&format!("insert ({w}, {id})")))?;
                oracle.insert(&w, id, 1);
            }
            names.push(w);
        }
        let mut sources: Vec<u64> = background.iter().map(|p| p.src).collect();
        sources.dedup();
        core.reset_stats();
        Ok(Workload {
            core,
            oracle,
            families: names,
            shared,
            sources,
            fresh: FRESH_BASE,
        })
    }
}

fn accumulator_for(cfg: &BenchConfig) -> Result<Option<Accumulator>, CliError> {
    if cfg.protocol.iter().any(|p| p.uses_accumulator()) {
        Ok(Some(cfg.accumulator()?))
    } else {
        Ok(None)
    }
}

fn ms(stats: &Stats) -> f64 {
    stats.verify_time().as_secs_f64() * 1e3
}

/// Conjunctive search latency and work counters for every n.
pub fn cmd_search(cfg: &BenchConfig) -> Result<Vec<RunRow>, CliError> {
    cfg.validate()?;
    let acc = accumulator_for(cfg)?;
    let max_n = *cfg.keywords.iter().max().expect("validated");
    let mut rows = Vec::new();
    for &protocol in &cfg.protocol {
        let mut load = Workload::prepare(cfg, protocol, acc.as_ref(), max_n)?;
        for &n in &cfg.keywords {
            let ws: Vec<&str> = load.families[..n].iter().map(String::as_str).collect();
            let truth = load.oracle.intersect(&ws);
            let mut times = Vec::with_capacity(cfg.repetitions);
            let mut result = BTreeSet::new();
            let mut stats = Stats::default();
            for _ in 0..cfg.repetitions {
                let start = Instant::now();
                let found = load.core.search_conjunctive(&ws).map_err(engine("search"))?;
                times.push(start.elapsed().as_secs_f64() * 1e3);
                stats = load.core.last_stats();
                result = found.into_iter().collect();
            }
            if !truth.is_subset(&result) {
                return Err(CliError::Invariant(format!(
                    "{protocol}: search over {n} keywords missed {:?}",
                    truth.difference(&result).collect::<Vec<_>>()
                )));
            }
            rows.push(RunRow {
                protocol: protocol.to_string(),
                adversary: AdversaryMode::Honest.to_string(),
                rounds: cfg.repetitions,
                tampered: 0,
                n,
                c: cfg.posting_size,
                elapsed_ms: mean(&times),
                median_ms: median(&times),
                result_size: result.len(),
                decryptions: stats.decryptions,
                membership_checks: stats.membership_checks,
                subfilters_loaded: stats.subfilter_loads,
                boundary_calls: stats.boundary_calls,
                verify_ms: ms(&stats),
                detections: 0,
                collisions: 0,
                misses: 0,
                false_alarms: 0,
                wrong_results: 0,
            });
        }
    }
    Ok(rows)
}

/// Outcome of one fault-injection run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tally {
    pub rounds: usize,
    pub tampered: usize,
    pub detections: usize,
    pub collisions: usize,
    pub misses: usize,
    pub false_alarms: usize,
    pub wrong_results: usize,
    pub last_result: usize,
}

enum Answer {
    Conjunctive(Vec<String>, Vec<u64>),
    Hops(u64, Vec<u64>),
    Update,
}

/// Runs `rounds` random operations with the store armed for one deviation
/// per round. Stops early once `target` rounds were tampered, if given.
pub fn fault_rounds(
    load: &mut Workload,
    mode: AdversaryMode,
    rounds: usize,
    target: Option<usize>,
    seed: u64,
    times: &mut Vec<f64>,
) -> Tally {
    load.core.with_store(|s| s.set_adversary(mode, seed));
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut tally = Tally::default();
    let mut inserted: Vec<(String, u64)> = Vec::new();
    let n = VERIFY_N.min(load.families.len());
    for _ in 0..rounds {
        if target.is_some_and(|t| tally.tampered >= t) {
            break;
        }
        tally.rounds += 1;
        load.core.clear_cache();
        let before = load.core.with_store(|s| {
            s.arm();
            s.deviations()
        });
        let start = Instant::now();
        let outcome: Result<Answer, Error> = match rng.gen_range(0..4) {
            0 if n > 0 => {
                let k = rng.gen_range(0..load.families.len());
                let ws: Vec<String> = (0..n)
                    .map(|i| load.families[(k + i) % load.families.len()].clone())
                    .collect();
                let refs: Vec<&str> = ws.iter().map(String::as_str).collect();
                let r = load.core.search_conjunctive(&refs);
                r.map(|ids| Answer::Conjunctive(ws, ids))
            }
            1 if !load.sources.is_empty() => {
                let v = load.sources[rng.gen_range(0..load.sources.len())];
                load.core.search_single(&keyword(v, "friend"), 2).map(|ids| Answer::Hops(v, ids))
            }
            3 if !inserted.is_empty() => {
                let (w, id) = inserted.pop().expect("non-empty");
                let r = load.core.delete(&w, id);
                match &r {
                    Ok(()) => {
                        load.oracle.delete(&w, id);
                    }
                    Err(_) => inserted.push((w, id)),
                }
                r.map(|_| Answer::Update)
            }
            _ => {
                let w = if load.families.is_empty() {
                    keyword(FAMILY_BASE, "friend")
                } else {
                    load.families[rng.gen_range(0..load.families.len())].clone()
                };
                load.fresh += 1;
                let id = load.fresh;
                let r = load.core.insert(&w, id, 1);
                if r.is_ok() {
                    load.oracle.insert(&w, id, 1);
                    inserted.push((w, id));
                }
                r.map(|_| Answer::Update)
            }
        };
        times.push(start.elapsed().as_secs_f64() * 1e3);
        let deviated = load.core.with_store(|s| {
            s.disarm();
            s.deviations() > before
        });
        let detected = matches!(outcome, Err(Error::Integrity(_)));
        tally.detections += usize::from(detected);
        if deviated {
            tally.tampered += 1;
            if !detected {
                if mode == AdversaryMode::TamperXset {
                    tally.collisions += 1;
                } else {
                    tally.misses += 1;
                }
            }
        } else if outcome.is_err() {
            tally.false_alarms += 1;
        }
        match outcome {
            Ok(Answer::Conjunctive(ws, ids)) => {
                let got: BTreeSet<u64> = ids.into_iter().collect();
                tally.last_result = got.len();
                let refs: Vec<&str> = ws.iter().map(String::as_str).collect();
                tally.wrong_results += usize::from(!load.oracle.intersect(&refs).is_subset(&got));
            }
            Ok(Answer::Hops(v, ids)) => {
                let got: BTreeSet<u64> = ids.into_iter().collect();
                tally.wrong_results += usize::from(got != load.oracle.khop(v, "friend", 2));
            }
            _ => {}
        }
    }
    load.core.with_store(|s| s.set_adversary(AdversaryMode::Honest, seed));
    tally
}

/// Fault-injection statistics for every (protocol, adversary) pair.
pub fn cmd_verify(cfg: &BenchConfig) -> Result<Vec<RunRow>, CliError> {
    cfg.validate()?;
    let acc = accumulator_for(cfg)?;
    let mut rows = Vec::new();
    for &protocol in &cfg.protocol {
        let mut load = Workload::prepare(cfg, protocol, acc.as_ref(), VERIFY_N.max(1))?;
        for &mode in &cfg.adversary {
            load.core.reset_stats();
            let mut times = Vec::new();
            let tally = fault_rounds(&mut load, mode, cfg.rounds, None, cfg.seed, &mut times);
            let stats = load.core.stats();
            rows.push(RunRow {
                protocol: protocol.to_string(),
                adversary: mode.to_string(),
                rounds: tally.rounds,
                tampered: tally.tampered,
                n: VERIFY_N,
                c: cfg.posting_size,
                elapsed_ms: mean(&times),
                median_ms: median(&times),
                result_size: tally.last_result,
                decryptions: stats.decryptions,
                membership_checks: stats.membership_checks,
                subfilters_loaded: stats.subfilter_loads,
                boundary_calls: stats.boundary_calls,
                verify_ms: ms(&stats),
                detections: tally.detections,
                collisions: tally.collisions,
                misses: tally.misses,
                false_alarms: tally.false_alarms,
                wrong_results: tally.wrong_results,
            });
        }
    }
    Ok(rows)
}
