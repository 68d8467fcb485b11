//! Desk-scale correctness suites. The same functions run at full scale in
//! the acceptance target.

use std::collections::BTreeSet;
use std::fmt;
use std::time::Instant;

use num_bigint::{BigUint, RandBigInt};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use secgraph::graph::{keyword, random_graph, toy_social_graph, Oracle};
use secgraph::protocol::Protocol;
use secgraph::store::AdversaryMode;
use secgraph::trusted::{split_name, TrustedCore};
use secgraph::verify::prime::hash_to_prime;
use secgraph::verify::{Accumulator, AccumulatorGroups, GroupProducts};
use secgraph::Error;

use crate::run::{fault_rounds, Tally, Workload};
use crate::{BenchConfig, CliError};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub suite: &'static str,
    pub protocol: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for SuiteOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict}  {:<22} {:<12} {}", self.suite, self.protocol, self.detail)
    }
}

/// Base configuration for suite cores: 1024-bit modulus, small groups.
pub fn suite_config(seed: u64) -> BenchConfig {
    BenchConfig {
        modulus_bits: 1024,
        group_size: 8,
        seed,
        ..BenchConfig::default()
    }
}

fn arm(core: &TrustedCore, inject: Option<AdversaryMode>) {
    if let Some(mode) = inject {
        core.with_store(|s| {
            if s.adversary_mode() != mode {
                s.set_adversary(mode, 1);
            }
            s.arm();
        });
    }
}

fn undirected(core: &mut TrustedCore, oracle: &mut Oracle, edges: &[(u64, u64)]) -> Result<(), Error> {
    let mut postings: Vec<(u64, u64)> = edges.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
    postings.sort_unstable();
    for (s, d) in postings {
        let w = keyword(s, "friend");
        if oracle.insert(&w, d, 1) {
            core.insert(&w, d, 1)?;
        }
    }
    Ok(())
}

/// Conjunctive search against the intersection oracle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleReport {
    pub graphs: usize,
    pub queries: usize,
    pub false_negatives: usize,
    pub false_positives: usize,
    pub membership_checks: u64,
    /// Analytic false-positive probability per membership check, at the
    /// deepest sub-filter level reached.
    pub bound: f64,
    pub errors: usize,
}

impl OracleReport {
    pub fn fp_rate(&self) -> f64 {
        if self.membership_checks == 0 {
            0.0
        } else {
            self.false_positives as f64 / self.membership_checks as f64
        }
    }

    pub fn passed(&self) -> bool {
        self.errors == 0 && self.false_negatives == 0 && self.fp_rate() <= 3.0 * self.bound
    }
}

pub fn oracle_equivalence(
    cfg: &BenchConfig,
    protocol: Protocol,
    acc: Option<&Accumulator>,
    graphs: usize,
    edges: usize,
    queries: usize,
    inject: Option<AdversaryMode>,
) -> Result<OracleReport, CliError> {
    let mut report = OracleReport {
        graphs,
        ..Default::default()
    };
    let vertices = (edges as u64 / 8).max(8);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut depth = 0;
    for g in 0..graphs {
        let cfg = BenchConfig {
            seed: cfg.seed.wrapping_add(g as u64),
            ..cfg.clone()
        };
        let mut core = cfg.core(protocol, acc)?;
        let mut oracle = Oracle::default();
        undirected(&mut core, &mut oracle, &random_graph(vertices, edges, cfg.seed))
            .map_err(crate::engine("building oracle graph"))?;
        depth = depth.max(core.state().tree().depth());
        for _ in 0..queries {
            let n = rng.gen_range(1..=6);
            let ws: Vec<String> = (0..n).map(|_| keyword(rng.gen_range(0..vertices), "friend")).collect();
            let refs: Vec<&str> = ws.iter().map(String::as_str).collect();
            arm(&core, inject);
            report.queries += 1;
            let got: BTreeSet<u64> = match core.search_conjunctive(&refs) {
                Ok(ids) => ids.into_iter().collect(),
                Err(_) => {
                    report.errors += 1;
                    continue;
                }
            };
            let truth = oracle.intersect(&refs);
            report.false_negatives += truth.difference(&got).count();
            report.false_positives += got.difference(&truth).count();
            report.membership_checks += core.last_stats().membership_checks;
        }
    }
    let filter = cfg.filter();
    report.bound = filter.false_positive_bound(filter.fingerprint_bits - depth);
    Ok(report)
}

/// Step-wise comparison of random updates and searches with the oracle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DynamicReport {
    pub ops: usize,
    pub inserts: usize,
    pub deletes: usize,
    pub emptied: usize,
    pub reinserts: usize,
    pub splits: u64,
    /// Steps where an update outcome or search answer disagreed.
    pub mismatches: usize,
    /// Steps after which the TSet size differed from the counter sum.
    pub size_violations: usize,
    pub first_failure: Option<String>,
}

impl DynamicReport {
    pub fn passed(&self) -> bool {
        self.mismatches == 0 && self.size_violations == 0
    }

    fn fail(&mut self, what: String) {
        self.mismatches += 1;
        self.first_failure.get_or_insert(what);
    }
}

pub fn dynamic_oracle(
    cfg: &BenchConfig,
    protocol: Protocol,
    acc: Option<&Accumulator>,
    ops: usize,
    inject: Option<AdversaryMode>,
) -> Result<DynamicReport, CliError> {
    const VERTICES: u64 = 16;
    const IDS: u64 = 48;
    let mut core = cfg.core(protocol, acc)?;
    let mut oracle = Oracle::default();
    let mut ever_deleted = BTreeSet::new();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut report = DynamicReport::default();
    for step in 0..ops {
        report.ops += 1;
        let v = rng.gen_range(0..VERTICES);
        let w = keyword(v, "friend");
        arm(&core, inject);
        match rng.gen_range(0..20) {
            0..=8 => {
                let u = rng.gen_range(0..IDS);
                let fresh = oracle.insert(&w, u, 1);
                match (core.insert(&w, u, 1), fresh) {
                    (Ok(()), true) => {
                        report.inserts += 1;
                        report.reinserts += usize::from(ever_deleted.contains(&(v, u)));
                    }
                    (Err(Error::Duplicate), false) => {}
                    (r, _) => {
                        if fresh && r.is_err() {
                            oracle.delete(&w, u);
                        }
                        report.fail(format!("step {step}: insert ({w}, {u}) gave {r:?}, oracle fresh={fresh}"));
                    }
                }
            }
            9..=14 => {
                // mostly delete a live pair so lists drain to empty
                let live = oracle.list(&w);
                let u = if !live.is_empty() && rng.gen_bool(0.8) {
                    live[rng.gen_range(0..live.len())]
                } else {
                    rng.gen_range(0..IDS)
                };
                let present = oracle.delete(&w, u);
                match (core.delete(&w, u), present) {
                    (Ok(()), true) => {
                        report.deletes += 1;
                        ever_deleted.insert((v, u));
                        report.emptied += usize::from(oracle.len(&w) == 0);
                    }
                    (Err(Error::NotFound(_)), false) => {}
                    (r, _) => {
                        if present && r.is_err() {
                            oracle.insert(&w, u, 1);
                        }
                        report.fail(format!("step {step}: delete ({w}, {u}) gave {r:?}, oracle present={present}"));
                    }
                }
            }
            15..=17 => {
                let n = rng.gen_range(1..=3);
                let ws: Vec<String> = (0..n).map(|_| keyword(rng.gen_range(0..VERTICES), "friend")).collect();
                let refs: Vec<&str> = ws.iter().map(String::as_str).collect();
                match core.search_conjunctive(&refs) {
                    Ok(ids) => {
                        let got: BTreeSet<u64> = ids.into_iter().collect();
                        let truth = oracle.intersect(&refs);
                        let exact = if n == 1 { got == truth } else { truth.is_subset(&got) };
                        if !exact {
                            report.fail(format!("step {step}: search {refs:?} gave {got:?}, oracle {truth:?}"));
                        }
                    }
                    Err(e) => report.fail(format!("step {step}: search {refs:?} failed: {e}")),
                }
            }
            _ => {
                let k = rng.gen_range(1..=3);
                match core.search_single(&w, k) {
                    Ok(ids) => {
                        let got: BTreeSet<u64> = ids.into_iter().collect();
                        let truth = oracle.khop(v, "friend", k);
                        if got != truth {
                            report.fail(format!("step {step}: {k}-hop from {v} gave {got:?}, oracle {truth:?}"));
                        }
                    }
                    Err(e) => report.fail(format!("step {step}: {k}-hop from {v} failed: {e}")),
                }
            }
        }
        let total = core.state().total_count() as usize;
        let tset = core.with_store(|s| s.tset_len());
        if tset != total || total != oracle.size() {
            report.size_violations += 1;
            report
                .first_failure
                .get_or_insert(format!("step {step}: tset {tset}, counters {total}, oracle {}", oracle.size()));
        }
    }
    report.splits = core.stats().splits;
    Ok(report)
}

/// Fault injection until `target` rounds were tampered (or `max_rounds`).
pub fn tamper_detection(
    cfg: &BenchConfig,
    protocol: Protocol,
    acc: Option<&Accumulator>,
    mode: AdversaryMode,
    target: usize,
    max_rounds: usize,
) -> Result<Tally, CliError> {
    let cfg = BenchConfig {
        background: 400,
        posting_size: 24,
        overlap: 4,
        ..cfg.clone()
    };
    let mut load = Workload::prepare(&cfg, protocol, acc, 4)?;
    let target = (mode != AdversaryMode::Honest).then_some(target);
    Ok(fault_rounds(&mut load, mode, max_rounds, target, cfg.seed, &mut Vec::new()))
}

/// Trapdoor-maintained accumulation values against brute force.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccumulatorReport {
    pub sets: usize,
    pub largest: usize,
    pub value_mismatches: usize,
    pub witness_failures: usize,
    pub forgeries: usize,
    pub forgeries_accepted: usize,
}

impl AccumulatorReport {
    pub fn passed(&self) -> bool {
        self.value_mismatches == 0 && self.witness_failures == 0 && self.forgeries_accepted == 0
    }
}

pub fn accumulator_check(
    acc: &Accumulator,
    sets: usize,
    max_group: usize,
    pool: usize,
    seed: u64,
) -> AccumulatorReport {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let primes: Vec<BigUint> = (0..pool as u64)
        .map(|i| hash_to_prime(&[seed.to_le_bytes(), i.to_le_bytes()].concat()))
        .collect();
    let params = acc.params();
    let mut report = AccumulatorReport::default();
    for set in 0..sets {
        let size = rng.gen_range(1..=max_group.min(pool - 1));
        let mut members: Vec<usize> = sample(&mut rng, pool, size + 1).into_vec();
        let outsider = members.pop().expect("size + 1 samples");
        let mut groups = AccumulatorGroups::new(acc.clone(), max_group);
        let mut products = GroupProducts::new(params.clone());
        let key = |i: usize| {
            let mut k = [0u8; 32];
            k[..8].copy_from_slice(&(i as u64).to_le_bytes());
            k
        };
        for &i in &members {
            groups.insert(0, &primes[i]).expect("room in group");
            products.update(0, &key(i), None, Some(&primes[i])).expect("fresh member");
        }
        // churn one member so removal and replacement paths are exercised
        if size > 1 && set % 2 == 0 {
            let j = rng.gen_range(0..members.len());
            let old = members[j];
            groups.replace(0, &primes[old], &primes[outsider]).expect("member");
            products.update(0, &key(old), Some(&primes[old]), Some(&primes[outsider])).expect("member");
            members[j] = outsider;
        } else if size > 1 {
            let old = members.swap_remove(rng.gen_range(0..members.len()));
            groups.remove(0, &primes[old]).expect("member");
            products.update(0, &key(old), Some(&primes[old]), None).expect("member");
        }
        report.sets += 1;
        report.largest = report.largest.max(members.len());

        let product = members.iter().fold(BigUint::from(1u8), |p, &i| p * &primes[i]);
        let brute = params.g.modpow(&product, &params.n);
        let value = groups.value(0).cloned().unwrap_or_default();
        report.value_mismatches += usize::from(value != brute);

        let j = members[rng.gen_range(0..members.len())];
        let w = products.witness(0, &key(j), &primes[j]).expect("member witness");
        report.witness_failures += usize::from(!groups.verify(0, &primes[j], &w));

        // forged witness for a member, then an honest witness for a non-member
        let forged = rng.gen_biguint_below(&params.n);
        report.forgeries += 2;
        report.forgeries_accepted += usize::from(forged != w && groups.verify(0, &primes[j], &forged));
        let non_member = loop {
            let i = rng.gen_range(0..pool);
            if !members.contains(&i) {
                break i;
            }
        };
        report.forgeries_accepted += usize::from(groups.verify(0, &primes[non_member], &w));
    }
    report
}

/// Structural work counters of conjunctive search.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkReport {
    pub searches: usize,
    pub violations: usize,
    pub first_failure: Option<String>,
}

pub fn work_bounds(
    cfg: &BenchConfig,
    protocol: Protocol,
    acc: Option<&Accumulator>,
    families: usize,
) -> Result<WorkReport, CliError> {
    let mut report = WorkReport::default();
    for cache in [0, 64] {
        let cfg = BenchConfig {
            cache,
            capacity: 256,
            background: 1000,
            ..cfg.clone()
        };
        let mut load = Workload::prepare(&cfg, protocol, acc, families)?;
        let c = cfg.posting_size as u64;
        for n in 1..=families {
            for repeat in 0..2 {
                let ws: Vec<&str> = load.families[..n].iter().map(String::as_str).collect();
                load.core.search_conjunctive(&ws).map_err(crate::engine("search"))?;
                let s = load.core.last_stats();
                report.searches += 1;
                let leaves = load.core.state().tree().leaf_count() as u64;
                let mut check = |ok: bool, what: String| {
                    if !ok {
                        report.violations += 1;
                        report.first_failure.get_or_insert(what);
                    }
                };
                let at = format!("{protocol} cache={cache} n={n} repeat={repeat}");
                check(s.decryptions == c, format!("{at}: {} decryptions, |PL| = {c}", s.decryptions));
                check(
                    s.membership_checks <= c * (n as u64 - 1),
                    format!("{at}: {} checks > c(n-1)", s.membership_checks),
                );
                check(
                    s.subfilter_loads <= leaves.min(s.membership_checks),
                    format!("{at}: {} sub-filter loads", s.subfilter_loads),
                );
                check(
                    s.boundary_calls == 1 + s.subfilter_loads,
                    format!("{at}: {} round trips for {} loads", s.boundary_calls, s.subfilter_loads),
                );
                if cache > 0 && repeat == 1 {
                    check(s.subfilter_loads == 0, format!("{at}: cached search reloaded filters"));
                }
            }
        }
    }
    Ok(report)
}

/// The two worked answers and the "Harry" split.
pub fn toy_examples(protocol: Protocol, acc: Option<&Accumulator>) -> Result<Vec<String>, CliError> {
    let graph = toy_social_graph();
    let mut core = suite_config(7).core(protocol, acc)?;
    for p in &graph.postings {
        core.insert(&p.keyword(), p.dst, p.weight).map_err(crate::engine("toy insert"))?;
    }
    for (id, name) in &graph.names {
        core.insert_name(*id, name).map_err(crate::engine("toy name"))?;
    }
    let mut failures = Vec::new();
    let common = core
        .search_conjunctive(&["003:friend", "005:friend"])
        .map_err(crate::engine("toy search"))?;
    if common != vec![2] {
        failures.push(format!("003:friend AND 005:friend gave {common:?}"));
    }
    let hops = core.search_single("003:friend", 2).map_err(crate::engine("toy search"))?;
    if !hops.contains(&5) {
        failures.push(format!("2-hop friends of 003 gave {hops:?}"));
    }
    let ha: BTreeSet<u64> = core.search_substring("Ha").map_err(crate::engine("toy search"))?.into_iter().collect();
    if ha != BTreeSet::from([1, 5]) {
        failures.push(format!("names containing Ha gave {ha:?}"));
    }
    let pairs = split_name("Harry", 2);
    let expected = ["#H", "Ha", "ar", "rr", "ry", "y$"];
    if pairs.len() != 6 || pairs.iter().zip(1..).zip(expected).any(|(((g, p), k), e)| g != e || *p != k) {
        failures.push(format!("Harry split into {pairs:?}"));
    }
    Ok(failures)
}

/// Runs every suite at desk scale. `inject` arms the given adversary before
/// each operation of the oracle suites, which must then fail.
pub fn cmd_selftest(seed: u64, inject: Option<AdversaryMode>) -> Result<Vec<SuiteOutcome>, CliError> {
    let cfg = suite_config(seed);
    let acc = cfg.accumulator()?;
    let mut out = Vec::new();
    let started = Instant::now();
    for protocol in Protocol::ALL {
        let acc = protocol.uses_accumulator().then_some(&acc);
        let name = protocol.to_string();

        let failures = toy_examples(protocol, acc)?;
        out.push(SuiteOutcome {
            suite: "toy examples",
            protocol: name.clone(),
            passed: failures.is_empty(),
            detail: if failures.is_empty() { "both answers and the Harry split".into() } else { failures.join("; ") },
        });

        let r = oracle_equivalence(&cfg, protocol, acc, 6, 200, 40, inject)?;
        out.push(SuiteOutcome {
            suite: "oracle equivalence",
            protocol: name.clone(),
            passed: r.passed(),
            detail: format!(
                "{} queries, {} false negatives, {} false positives over {} checks, {} errors",
                r.queries, r.false_negatives, r.false_positives, r.membership_checks, r.errors
            ),
        });

        let small = BenchConfig {
            capacity: 32,
            ..cfg.clone()
        };
        let r = dynamic_oracle(&small, protocol, acc, 1000, inject)?;
        out.push(SuiteOutcome {
            suite: "dynamic oracle",
            protocol: name.clone(),
            passed: r.passed() && r.emptied > 0 && r.reinserts > 0,
            detail: match &r.first_failure {
                Some(f) => f.clone(),
                None => format!(
                    "{} ops, {} inserts, {} deletes, {} emptied, {} reinserts, {} splits",
                    r.ops, r.inserts, r.deletes, r.emptied, r.reinserts, r.splits
                ),
            },
        });

        let r = work_bounds(&cfg, protocol, acc, 4)?;
        out.push(SuiteOutcome {
            suite: "work bounds",
            protocol: name.clone(),
            passed: r.violations == 0,
            detail: r.first_failure.unwrap_or_else(|| format!("{} searches within bounds", r.searches)),
        });

        let honest = tamper_detection(&cfg, protocol, acc, AdversaryMode::Honest, 0, 200)?;
        out.push(SuiteOutcome {
            suite: "completeness",
            protocol: name.clone(),
            passed: honest.detections == 0 && honest.false_alarms == 0 && honest.wrong_results == 0,
            detail: format!("{} honest rounds, {} integrity errors", honest.rounds, honest.detections),
        });

        if protocol.is_verifiable() {
            for mode in AdversaryMode::ALL.into_iter().filter(|m| *m != AdversaryMode::Honest) {
                let t = tamper_detection(&cfg, protocol, acc, mode, 50, 2000)?;
                out.push(SuiteOutcome {
                    suite: "tamper detection",
                    protocol: format!("{name}/{mode}"),
                    passed: t.tampered >= 50 && t.misses == 0 && t.false_alarms == 0,
                    detail: format!(
                        "{} tampered, {} detected, {} collisions, {} misses",
                        t.tampered, t.detections, t.collisions, t.misses
                    ),
                });
            }
        }
    }
    let r = accumulator_check(&acc, 20, 200, 400, seed);
    out.push(SuiteOutcome {
        suite: "accumulator",
        protocol: "-".into(),
        passed: r.passed(),
        detail: format!(
            "{} sets up to {} members, {} value mismatches, {} bad witnesses, {}/{} forgeries accepted",
            r.sets, r.largest, r.value_mismatches, r.witness_failures, r.forgeries_accepted, r.forgeries
        ),
    });
    out.push(SuiteOutcome {
        suite: "runtime",
        protocol: "-".into(),
        passed: true,
        detail: format!("{:.1} s", started.elapsed().as_secs_f64()),
    });
    Ok(out)
}
