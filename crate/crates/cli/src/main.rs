//! `graphsee` — runs the embedding experiments and writes CSV for plotting.
//!
//! Per-node or per-λ rows go to stdout (or `--out`); summary scalars go to
//! stderr as one JSON object (or `--summary`). Exit codes: 0 success,
//! 2 usage error, 3 data error, 4 numerical failure.

mod commands;
mod report;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graphsee::enf::Link;
use graphsee::spectral::Variant;

#[derive(Parser)]
#[command(name = "graphsee", version, about = "Graph-sampling node embedding experiments")]
struct Cli {
    /// Write the CSV here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Write the JSON summary here instead of stderr.
    #[arg(long, global = true)]
    summary: Option<PathBuf>,

    /// Worker threads for replicate loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Base seed; replicate r uses seed + r.
    #[arg(long, global = true, env = "GRAPHSEE_SEED", default_value_t = 1)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// Edge list (1-based `i j` per line), `-` for stdin, or `zkc` for the
    /// bundled karate club.
    edge_list: String,

    /// `node_id,label` file with 0/1 labels; defaults to the bundled labels
    /// when EDGE_LIST is `zkc`.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Size, degrees, smallest nonzero Laplacian eigenvalue and its eigenvector.
    GraphInfo {
        #[command(flatten)]
        input: Input,
    },
    /// Eigen-neighbour-function embedding and classifier.
    Enf {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "logistic")]
        link: Link,
        /// Scale x to unit norm (sign so that corr(x, y) >= 0).
        #[arg(long)]
        normalize: bool,
        /// Seed-sample size for 1-wave snowball replicates.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 1000, requires = "sample")]
        replicates: usize,
    },
    /// Supervised normalized-Laplacian embedding.
    Snle {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 0.1)]
        lambda: f64,
        /// Penalty weight; 0 selects the eigenvector route (full graph only).
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value = "plain")]
        variant: Variant,
        #[arg(long, conflicts_with = "sweep")]
        sample: Option<usize>,
        #[arg(long, default_value_t = 1000, requires = "sample")]
        replicates: usize,
        /// λ grid `lo:hi:step`; emits lambda,rank,correlation rows.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Targeted random walks: per-walk ENF estimates and visit diagnostics.
    Trw {
        #[command(flatten)]
        input: Input,
        /// Jump weight r >= 0.
        #[arg(long, default_value_t = 2.0)]
        r: f64,
        /// Retained states per walk.
        #[arg(long, default_value_t = 10_000)]
        states: usize,
        /// Burn-in steps (default 50 N).
        #[arg(long)]
        burnin: Option<usize>,
        /// Steps between retained states.
        #[arg(long)]
        spacing: Option<usize>,
        #[arg(long, default_value_t = 1)]
        walks: usize,
        /// Walk l is seeded with seed + l * stride; 0 repeats one walk.
        #[arg(long, default_value_t = 1)]
        seed_stride: u64,
    },
}

/// Invalid flag combinations or values caught after parsing.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use graphsee::Error as E;
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidArgument(_) => 2,
                E::Parse { .. }
                | E::SelfLoop { .. }
                | E::EmptyInput
                | E::IsolatedNode(_)
                | E::NodeOutOfRange { .. }
                | E::DimensionMismatch { .. }
                | E::Io(_) => 3,
                E::NotSymmetric(_)
                | E::ConstantVector
                | E::Singular(_)
                | E::NoConvergence { .. }
                | E::Separated
                | E::UnusableWeight(_)
                | E::TooFewReplicates(_) => 4,
            };
        }
        if cause.is::<std::io::Error>() {
            return 3;
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
