//! `procrustes`: solve constrained Procrustes problems from JSON problem
//! files, generate instances, run batches and test graph isomorphism.
//!
//! Exit codes: 0 success, 1 infeasible (or not isomorphic), 2 unresolved or
//! runtime error, 3 malformed input.

mod commands;
mod input;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{BenchArgs, GenArgs, GenKind, GraphIsoArgs, Outcome, SolveArgs};
use input::{MethodTag, NormTag, SettingsDoc};

#[derive(Parser)]
#[command(name = "procrustes", version, about = "Constrained Procrustes problems via rank-constrained SDP")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

/// Overrides of the settings block of an input file.
#[derive(Args, Clone, Default)]
struct Tuning {
    /// Final bracket width of bisection.
    #[arg(long)]
    delta: Option<f64>,
    /// Threshold of the ε-rank [default: 1e-6].
    #[arg(long = "eps-rank")]
    eps_rank: Option<f64>,
    /// Objective level for rank heuristics (default: none) or graph search (default: 1e-6).
    #[arg(long)]
    gamma: Option<f64>,
    /// Iteration budget of a rank heuristic run [default: 50].
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Relative tolerance of the SDP solver [default: 1e-8].
    #[arg(long)]
    tol: Option<f64>,
    /// Heuristic used inside bisection [default: logdet].
    #[arg(long)]
    inner: Option<MethodTag>,
}

impl Tuning {
    fn doc(&self) -> SettingsDoc {
        SettingsDoc {
            delta: self.delta,
            eps_rank: self.eps_rank,
            gamma: self.gamma,
            max_iters: self.max_iters,
            tol: self.tol,
            inner: self.inner,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem file.
    Solve {
        file: PathBuf,
        #[arg(long)]
        norm: Option<NormTag>,
        /// [default: bisect]
        #[arg(long)]
        method: Option<MethodTag>,
        /// Recorded in the report.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        tuning: Tuning,
        /// Also write FILE's stem + `.report.json` beside the input.
        #[arg(long)]
        json: bool,
    },
    /// Write a generated instance (problem file, or two adjacency files for `graph`).
    Gen {
        #[arg(long, value_enum)]
        kind: GenKind,
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        p: usize,
        #[arg(long, default_value_t = 3)]
        q: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = NormTag::L1)]
        norm: NormTag,
        /// Edge probability of generated graphs.
        #[arg(long, default_value_t = 0.5)]
        edge_prob: f64,
        /// Output path (stdout when absent; required for graphs).
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Second adjacency file of a graph pair.
        #[arg(long)]
        out_b: Option<PathBuf>,
    },
    /// Run a batch descriptor and aggregate the results.
    Bench {
        file: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
        #[arg(long)]
        json: bool,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Search for a permutation mapping one graph onto another.
    Graphiso {
        file_a: PathBuf,
        file_b: PathBuf,
        /// trace, logdet or cvxiter [default: cvxiter]
        #[arg(long)]
        method: Option<MethodTag>,
        #[command(flatten)]
        tuning: Tuning,
        #[arg(long)]
        json: bool,
    },
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Solve {
            file,
            norm,
            method,
            seed,
            tuning,
            json,
        } => commands::solve(&SolveArgs {
            file,
            norm,
            method,
            seed,
            settings: tuning.doc(),
            json,
        }),
        Command::Gen {
            kind,
            m,
            n,
            p,
            q,
            noise,
            seed,
            norm,
            edge_prob,
            out,
            out_b,
        } => commands::gen(&GenArgs {
            kind,
            m,
            n,
            p,
            q,
            noise,
            seed,
            norm,
            edge_prob,
            out,
            out_b,
        }),
        Command::Bench {
            file,
            tuning,
            json,
            threads,
        } => {
            if let Some(t) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
                    log::warn!("thread pool: {e}");
                }
            }
            commands::bench(&BenchArgs {
                file,
                settings: tuning.doc(),
                json,
            })
        }
        Command::Graphiso {
            file_a,
            file_b,
            method,
            tuning,
            json,
        } => commands::graphiso(&GraphIsoArgs {
            file_a,
            file_b,
            method,
            settings: tuning.doc(),
            json,
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    let out = run(cli);
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(out.stdout.as_bytes());
    let _ = stdout.flush();
    ExitCode::from(out.exit as u8)
}
