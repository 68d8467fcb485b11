use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use secgraph::store::AdversaryMode;
use secgraph_cli::report::write_csv;
use secgraph_cli::{cmd_build, cmd_search, cmd_selftest, cmd_verify, BenchConfig, CliError};

#[derive(Parser)]
#[command(name = "secgraph", version, about = "Encrypted graph search benchmarks and self-tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stream a dataset into fresh encrypted databases and report build costs.
    Build(BenchConfig),
    /// Conjunctive search latency and work counters for each keyword count.
    Search(BenchConfig),
    /// Inject store misbehaviour and count detections.
    Verify(BenchConfig),
    /// Run the correctness suites at desk scale.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Make the store misbehave during the oracle suites.
        #[arg(long)]
        inject: Option<AdversaryMode>,
    },
    /// Write a synthetic SNAP-style edge list sorted by source.
    Generate {
        #[arg(long, default_value_t = 36_692)]
        vertices: u64,
        /// Unordered pairs; each is written in both directions.
        #[arg(long, default_value_t = 25_000)]
        pairs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Build(cfg) => write_csv(&cmd_build(&cfg)?, cfg.output_path().as_deref()),
        Command::Search(cfg) => write_csv(&cmd_search(&cfg)?, cfg.output_path().as_deref()),
        Command::Verify(cfg) => write_csv(&cmd_verify(&cfg)?, cfg.output_path().as_deref()),
        Command::Generate { vertices, pairs, seed, output } => {
            if vertices < 2 {
                return Err(CliError::Config("--vertices must be at least 2".into()));
            }
            let mut out: Box<dyn Write> = match output {
                Some(path) => Box::new(BufWriter::new(File::create(path)?)),
                None => Box::new(BufWriter::new(io::stdout().lock())),
            };
            secgraph::graph::write_synthetic_edge_list(&mut out, vertices, pairs, seed)?;
            out.flush()?;
            Ok(())
        }
        Command::Selftest { seed, inject } => {
            let outcomes = cmd_selftest(seed, inject)?;
            for o in &outcomes {
                println!("{o}");
            }
            let failed: Vec<_> = outcomes.iter().filter(|o| !o.passed).collect();
            if failed.is_empty() {
                println!("all suites passed");
                Ok(())
            } else {
                let names: Vec<_> = failed.iter().map(|o| format!("{} ({})", o.suite, o.protocol)).collect();
                Err(CliError::Invariant(names.join(", ")))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("secgraph: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
