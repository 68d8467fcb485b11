use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use secgraph::graph::{parse_edge_list, parse_names, ParseOptions, PlainGraph};
use secgraph::ldcf::FilterParams;
use secgraph::protocol::Protocol;
use secgraph::store::AdversaryMode;
use secgraph::trusted::{Config, TrustedCore};
use secgraph::verify::Accumulator;

use crate::CliError;

/// Overrides the directory relative `--output` paths resolve against.
pub const OUT_DIR_ENV: &str = "SECGRAPH_OUT_DIR";

#[derive(Debug, Clone, Args)]
pub struct BenchConfig {
    /// SNAP edge list. Search and verify synthesize a background graph when absent.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// `id,name` corpus indexed for sub-string search.
    #[arg(long)]
    pub names: Option<PathBuf>,
    /// Dataset fractions in (0, 1], comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    pub fraction: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "secgraph,vsecgraph,vsecgraph-a")]
    pub protocol: Vec<Protocol>,
    /// Conjunctive keyword counts n.
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10")]
    pub keywords: Vec<usize>,
    /// Posting-list size c of each synthesized search keyword.
    #[arg(long, default_value_t = 130)]
    pub posting_size: usize,
    /// Ids shared by every synthesized keyword, i.e. the true result size.
    #[arg(long, default_value_t = 13)]
    pub overlap: usize,
    /// Slots per sub-filter.
    #[arg(long, default_value_t = 8192)]
    pub capacity: usize,
    #[arg(long, default_value_t = 16)]
    pub fp_bits: u8,
    /// Accumulator group size N.
    #[arg(long, default_value_t = 200)]
    pub group_size: usize,
    #[arg(long, default_value_t = 2048)]
    pub modulus_bits: u32,
    /// Sub-filters cached across searches (0: per-search cache only).
    #[arg(long, default_value_t = 0)]
    pub cache: usize,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "honest,tamper_tset,tamper_xset,drop_entry,stale_replay"
    )]
    pub adversary: Vec<AdversaryMode>,
    /// Rounds per adversary mode in `verify`.
    #[arg(long, default_value_t = 1000)]
    pub rounds: usize,
    /// Timed repetitions per search row.
    #[arg(long, default_value_t = 20)]
    pub repetitions: usize,
    /// Edges of the synthetic background graph when no dataset is given.
    #[arg(long, default_value_t = 5000)]
    pub background: usize,
    /// Fraction of built postings deleted again after `build`, followed by a
    /// search of every touched keyword.
    #[arg(long, default_value_t = 0.0)]
    pub churn: f64,
    /// Insert both directions of every edge line.
    #[arg(long)]
    pub undirected: bool,
    /// Stream edges in a seeded random order instead of file order.
    #[arg(long)]
    pub shuffle: bool,
    /// CSV destination; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Parser)]
struct Defaults {
    #[command(flatten)]
    config: BenchConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Defaults::parse_from(["secgraph"]).config
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.fraction.is_empty() || self.fraction.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return bad(format!("fractions must lie in (0, 1]: {:?}", self.fraction));
        }
        if self.protocol.is_empty() {
            return bad("no protocol selected".into());
        }
        if self.keywords.is_empty() || self.keywords.contains(&0) {
            return bad("keyword counts must be positive".into());
        }
        if self.posting_size == 0 || self.overlap > self.posting_size {
            return bad("need 0 <= overlap <= posting-size and posting-size > 0".into());
        }
        if self.capacity < 2 {
            return bad("capacity must be at least 2 slots".into());
        }
        if !(2..=16).contains(&self.fp_bits) {
            return bad("fp-bits must be in 2..=16".into());
        }
        if self.group_size == 0 {
            return bad("group-size must be positive".into());
        }
        if self.modulus_bits != 1024 && self.modulus_bits != 2048 {
            return bad("modulus-bits must be 1024 or 2048".into());
        }
        if self.rounds == 0 || self.repetitions == 0 {
            return bad("rounds and repetitions must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.churn) {
            return bad("churn must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn filter(&self) -> FilterParams {
        FilterParams {
            fingerprint_bits: self.fp_bits,
            ..FilterParams::with_capacity(self.capacity)
        }
    }

    pub fn core_config(&self, protocol: Protocol) -> Config {
        Config {
            protocol,
            filter: self.filter(),
            modulus_bits: self.modulus_bits,
            group_size: self.group_size,
            cache_capacity: self.cache,
            ..Config::new(protocol)
        }
    }

    /// Seeded accumulator, shared by every A-mode core of one command.
    pub fn accumulator(&self) -> Result<Accumulator, CliError> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed ^ 0x5ec9_7a9b);
        Accumulator::setup(self.modulus_bits, &mut rng).map_err(|e| CliError::Config(e.to_string()))
    }

    /// A fresh trusted core plus in-process store.
    pub fn core(&self, protocol: Protocol, acc: Option<&Accumulator>) -> Result<TrustedCore, CliError> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        let acc = if protocol.uses_accumulator() { acc.cloned() } else { None };
        TrustedCore::direct_with(self.core_config(protocol), acc, &mut rng)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load_dataset(&self) -> Result<Option<PlainGraph>, CliError> {
        let Some(path) = &self.dataset else {
            return Ok(None);
        };
        let options = ParseOptions {
            directed: !self.undirected,
            ..ParseOptions::default()
        };
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let mut graph = parse_edge_list(BufReader::new(file), &options)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        if let Some(names) = &self.names {
            let file = File::open(names).with_context(|| format!("opening {}", names.display()))?;
            graph.names = parse_names(BufReader::new(file))
                .map_err(|e| CliError::Parse(format!("{}: {e}", names.display())))?;
        }
        Ok(Some(graph))
    }

    /// Where CSV output goes, after applying the output-directory override.
    pub fn output_path(&self) -> Option<PathBuf> {
        let out = self.output.as_ref()?;
        match std::env::var_os(OUT_DIR_ENV) {
            Some(dir) if out.is_relative() => Some(PathBuf::from(dir).join(out)),
            _ => Some(out.clone()),
        }
    }
}
