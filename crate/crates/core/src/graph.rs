//! Plaintext side: edge-list and name-corpus parsing, update streams, and
//! the reference oracle every search is compared against. Nothing here
//! touches keys or ciphertexts.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{self, BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Keyword of `id`'s neighbours under relation `kind`.
pub fn keyword(id: u64, kind: &str) -> String {
    format!("{id}:{kind}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseOptions {
    pub directed: bool,
    pub default_type: String,
    pub default_weight: u64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            directed: false,
            default_type: "friend".into(),
            default_weight: 1,
        }
    }
}

#[derive(Debug)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

/// One directed posting: `id_in` joins the list of `src:kind`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Posting {
    pub src: u64,
    pub dst: u64,
    pub kind: String,
    pub weight: u64,
}

impl Posting {
    pub fn keyword(&self) -> String {
        keyword(self.src, &self.kind)
    }
}

/// A typed, weighted graph as keyword-keyed posting lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlainGraph {
    pub directed: bool,
    /// Postings in first-seen order, duplicate-free.
    pub postings: Vec<Posting>,
    pub names: BTreeMap<u64, String>,
    /// Repeated edges that were dropped.
    pub duplicates: usize,
    /// Index into `postings` where each accepted edge starts.
    edge_starts: Vec<usize>,
}

impl PlainGraph {
    pub fn new(directed: bool) -> Self {
        PlainGraph {
            directed,
            ..Default::default()
        }
    }

    /// Adds an edge (both directions when undirected). Returns how many new
    /// postings it produced.
    pub fn add_edge(&mut self, src: u64, dst: u64, kind: &str, weight: u64) -> usize {
        let mut seen: HashSet<(u64, u64, String)> = self
            .postings
            .iter()
            .map(|p| (p.src, p.dst, p.kind.clone()))
            .collect();
        self.push_edge(&mut seen, src, dst, kind, weight)
    }

    fn push_edge(
        &mut self,
        seen: &mut HashSet<(u64, u64, String)>,
        src: u64,
        dst: u64,
        kind: &str,
        weight: u64,
    ) -> usize {
        let mut added = 0;
        let start = self.postings.len();
        let mut directions = vec![(src, dst)];
        if !self.directed && src != dst {
            directions.push((dst, src));
        }
        for (a, b) in directions {
            if seen.insert((a, b, kind.to_string())) {
                self.postings.push(Posting {
                    src: a,
                    dst: b,
                    kind: kind.to_string(),
                    weight,
                });
                added += 1;
            }
        }
        if added == 0 {
            self.duplicates += 1;
        } else {
            self.edge_starts.push(start);
        }
        added
    }

    /// Number of accepted edges; an undirected edge counts once.
    pub fn edge_count(&self) -> usize {
        self.edge_starts.len()
    }

    /// The postings of each accepted edge, in input order.
    pub fn edges(&self) -> Vec<&[Posting]> {
        let ends = self.edge_starts.iter().skip(1).copied().chain([self.postings.len()]);
        self.edge_starts
            .iter()
            .zip(ends)
            .map(|(&a, b)| &self.postings[a..b])
            .collect()
    }

    /// Keyword to ordered `(id_in, weight)` list.
    pub fn adjacency(&self) -> BTreeMap<String, Vec<(u64, u64)>> {
        let mut out: BTreeMap<String, Vec<(u64, u64)>> = BTreeMap::new();
        for p in &self.postings {
            out.entry(p.keyword()).or_default().push((p.dst, p.weight));
        }
        out
    }

    pub fn vertex_count(&self) -> usize {
        let mut v = HashSet::new();
        for p in &self.postings {
            v.insert(p.src);
            v.insert(p.dst);
        }
        v.len()
    }

    pub fn oracle(&self) -> Oracle {
        let mut oracle = Oracle::default();
        for p in &self.postings {
            oracle.insert(&p.keyword(), p.dst, p.weight);
        }
        for (id, name) in &self.names {
            oracle.set_name(*id, name);
        }
        oracle
    }
}

/// Parses a whitespace-separated `src dst [weight]` edge list. Lines
/// starting with `#` or `%` and blank lines are skipped.
pub fn parse_edge_list<R: BufRead>(input: R, options: &ParseOptions) -> Result<PlainGraph, ParseError> {
    let mut graph = PlainGraph::new(options.directed);
    let mut seen = HashSet::new();
    for (index, line) in input.lines().enumerate() {
        let line_no = index + 1;
        let line = line.map_err(|e| ParseError {
            line: line_no,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let mut number = |what: &str| -> Result<Option<u64>, ParseError> {
            fields
                .next()
                .map(|f| {
                    f.parse::<u64>().map_err(|_| ParseError {
                        line: line_no,
                        message: format!("{what} {f:?} is not a non-negative integer"),
                    })
                })
                .transpose()
        };
        let src = number("source id")?.ok_or_else(|| ParseError {
            line: line_no,
            message: "missing source id".into(),
        })?;
        let dst = number("target id")?.ok_or_else(|| ParseError {
            line: line_no,
            message: "missing target id".into(),
        })?;
        let weight = number("weight")?.unwrap_or(options.default_weight);
        graph.push_edge(&mut seen, src, dst, &options.default_type, weight);
    }
    Ok(graph)
}

/// Parses an `id,name` corpus. A header line whose first field is not a
/// number is skipped.
pub fn parse_names<R: BufRead>(input: R) -> Result<BTreeMap<u64, String>, ParseError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut names = BTreeMap::new();
    for (index, record) in reader.records().enumerate() {
        let line = index + 1;
        let record = record.map_err(|e| ParseError {
            line,
            message: e.to_string(),
        })?;
        let (Some(id), Some(name)) = (record.get(0), record.get(1)) else {
            return Err(ParseError {
                line,
                message: "expected id,name".into(),
            });
        };
        match id.trim().parse::<u64>() {
            Ok(id) => {
                names.insert(id, name.to_string());
            }
            Err(_) if index == 0 => {}
            Err(_) => {
                return Err(ParseError {
                    line,
                    message: format!("id {id:?} is not a non-negative integer"),
                })
            }
        }
    }
    Ok(names)
}

/// Ground truth for all three search types over a mutable graph.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Oracle {
    lists: HashMap<String, Vec<(u64, u64)>>,
    names: BTreeMap<u64, String>,
}

impl Oracle {
    /// Adds `(w, id)`; false if already present.
    pub fn insert(&mut self, w: &str, id: u64, weight: u64) -> bool {
        let list = self.lists.entry(w.to_string()).or_default();
        if list.iter().any(|(x, _)| *x == id) {
            return false;
        }
        list.push((id, weight));
        true
    }

    /// Removes `(w, id)`; false if absent.
    pub fn delete(&mut self, w: &str, id: u64) -> bool {
        let Some(list) = self.lists.get_mut(w) else {
            return false;
        };
        let Some(pos) = list.iter().position(|(x, _)| *x == id) else {
            return false;
        };
        list.swap_remove(pos);
        if list.is_empty() {
            self.lists.remove(w);
        }
        true
    }

    pub fn contains(&self, w: &str, id: u64) -> bool {
        self.lists.get(w).is_some_and(|l| l.iter().any(|(x, _)| *x == id))
    }

    pub fn set_name(&mut self, id: u64, name: &str) {
        self.names.insert(id, name.to_string());
    }

    pub fn remove_name(&mut self, id: u64) {
        self.names.remove(&id);
    }

    pub fn list(&self, w: &str) -> Vec<u64> {
        self.lists
            .get(w)
            .map(|l| l.iter().map(|(x, _)| *x).collect())
            .unwrap_or_default()
    }

    pub fn len(&self, w: &str) -> usize {
        self.lists.get(w).map_or(0, |l| l.len())
    }

    /// Total number of live pairs.
    pub fn size(&self) -> usize {
        self.lists.values().map(|l| l.len()).sum()
    }

    pub fn keywords(&self) -> impl Iterator<Item = &String> {
        self.lists.keys()
    }

    /// Ids present in every keyword's list.
    pub fn intersect(&self, keywords: &[&str]) -> BTreeSet<u64> {
        let Some((first, rest)) = keywords.split_first() else {
            return BTreeSet::new();
        };
        self.list(first)
            .into_iter()
            .filter(|id| rest.iter().all(|w| self.contains(w, *id)))
            .collect()
    }

    /// Vertices reachable from `source` in at most `k` hops over `kind`
    /// edges, excluding `source`.
    pub fn khop(&self, source: u64, kind: &str, k: usize) -> BTreeSet<u64> {
        let mut visited = BTreeSet::from([source]);
        let mut frontier = vec![source];
        for _ in 0..k {
            let mut next = Vec::new();
            for v in frontier {
                for id in self.list(&keyword(v, kind)) {
                    if visited.insert(id) {
                        next.push(id);
                    }
                }
            }
            frontier = next;
        }
        visited.remove(&source);
        visited
    }

    /// Vertices whose `#name$` contains `query`.
    pub fn substring(&self, query: &str) -> BTreeSet<u64> {
        if query.is_empty() {
            return BTreeSet::new();
        }
        self.names
            .iter()
            .filter(|(_, n)| format!("#{n}$").contains(query))
            .map(|(id, _)| *id)
            .collect()
    }
}

/// The six-vertex friendship graph used in the worked examples: 002 is the
/// only common friend of 003 and 005, and 005 is two hops from 003.
pub fn toy_social_graph() -> PlainGraph {
    let mut g = PlainGraph::new(false);
    for (a, b, weight) in [(1, 2, 5), (2, 3, 3), (2, 5, 4), (3, 4, 2), (5, 6, 1)] {
        g.add_edge(a, b, "friend", weight);
    }
    for (id, name) in [
        (1, "Harry"),
        (2, "Ron"),
        (3, "Luna"),
        (4, "Ginny"),
        (5, "Hannah"),
        (6, "Neville"),
    ] {
        g.names.insert(id, name.to_string());
    }
    g
}

/// Random undirected graph on `vertices` vertices with `edges` distinct
/// edges and a heavy-tailed degree distribution.
pub fn random_graph(vertices: u64, edges: usize, seed: u64) -> Vec<(u64, u64)> {
    assert!(vertices >= 2, "need at least two vertices");
    let max_edges = (vertices * (vertices - 1) / 2) as usize;
    let edges = edges.min(max_edges);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(edges);
    while out.len() < edges {
        // squaring a uniform draw skews sources towards low ids
        let u: f64 = rng.gen();
        let a = ((u * u) * vertices as f64) as u64 % vertices;
        let b = rng.gen_range(0..vertices);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if seen.insert(key) {
            out.push((a, b));
        }
    }
    out
}

/// Synthetic stand-in for an email network edge list: `edges` undirected
/// edges over `vertices` vertices, written in SNAP layout with both
/// directions of every pair and lines sorted by source.
pub fn write_synthetic_edge_list<W: Write>(
    out: &mut W,
    vertices: u64,
    edges: usize,
    seed: u64,
) -> io::Result<()> {
    let mut list: Vec<(u64, u64)> = random_graph(vertices, edges, seed)
        .into_iter()
        .flat_map(|(a, b)| [(a, b), (b, a)])
        .collect();
    list.sort_unstable();
    writeln!(out, "# Directed synthetic graph (each unordered pair listed in both directions)")?;
    writeln!(out, "# Nodes: {vertices} Edges: {}", list.len())?;
    writeln!(out, "# FromNodeId\tToNodeId")?;
    for (a, b) in list {
        writeln!(out, "{a}\t{b}")?;
    }
    Ok(())
}

/// Deterministic permutation of `items` for a given seed.
pub fn shuffled<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut out = items.to_vec();
    out.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    out
}

/// Random names from a small syllable alphabet, so sub-strings recur.
pub fn random_names(count: usize, seed: u64) -> BTreeMap<u64, String> {
    const SYLLABLES: [&str; 12] = ["ha", "ar", "ry", "lu", "na", "ro", "n", "gi", "ve", "le", "an", "ne"];
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count as u64)
        .map(|id| {
            let len = rng.gen_range(1..=4);
            let name: String = (0..len)
                .map(|_| *SYLLABLES.choose(&mut rng).unwrap())
                .collect();
            (id, name)
        })
        .collect()
}
