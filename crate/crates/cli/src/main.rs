//! `tempergrid`: generate instances, build schedules, run 2D-PT and analyze
//! traces.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tempergrid::analysis::{Infeasible, BOOTSTRAP_RESAMPLES};
use tempergrid::instances::WishartSpec;
use tempergrid::Error;

use crate::config::SparsifyParams;

#[derive(Debug, Parser)]
#[command(name = "tempergrid", version, about = "Two-dimensional parallel tempering for constrained Ising problems")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "TEMPERGRID_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write an instance bundle.
    Generate {
        #[command(subcommand)]
        kind: GenerateKind,
    },
    /// Add copy-constraint sparsification to a bundle.
    Sparsify {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 3)]
        copies: usize,
        /// Defaults to the smallest cap that fits.
        #[arg(long)]
        max_degree: Option<usize>,
        #[arg(long)]
        force: bool,
    },
    /// Build an adaptive temperature and penalty schedule as JSON.
    Schedule {
        #[arg(long)]
        bundle: PathBuf,
        /// Schedule config JSON; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment config and write trace and summary.
    Run {
        config: PathBuf,
        /// Run J independent fixed-penalty columns at the mean penalty.
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        force: bool,
    },
    /// KL divergence of decoded target samples from the exact logical
    /// Boltzmann distribution, as CSV.
    Kl {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 30)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Residual-energy curve over trials of one instance, as CSV.
    Analyze {
        #[arg(long = "trace", required = true)]
        traces: Vec<PathBuf>,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_enum, default_value_t = Policy::Decode)]
        policy: Policy,
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
        #[arg(long, default_value_t = BOOTSTRAP_RESAMPLES)]
        resamples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-trace hitting times and swap rates as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fit a finite-size-scaling collapse to residual curves.
    Collapse {
        /// `N=PATH` for a residual CSV at logical size N; repeat per size.
        #[arg(long = "curve", required = true, value_parser = commands::parse_curve_arg)]
        curves: Vec<(usize, PathBuf)>,
        /// Collapse options JSON.
        #[arg(long)]
        options: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum GenerateKind {
    /// Planted Wishart instance.
    Wishart {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.75)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Enumerate to confirm the planted state is the unique ground
        /// state, moving to the next seed if not.
        #[arg(long)]
        verify: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Five-spin complete graph.
    FiveNode {
        /// Model JSON replacing the default couplings.
        #[arg(long)]
        couplings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Policy {
    Decode,
    Drop,
}

impl From<Policy> for Infeasible {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Decode => Infeasible::Decode,
            Policy::Drop => Infeasible::Drop,
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::TooLarge { .. } => 3,
        Error::Io { .. } => 1,
        _ => 2,
    }
}

fn dispatch(command: Command, threads: usize) -> tempergrid::Result<()> {
    match command {
        Command::Generate { kind } => match kind {
            GenerateKind::Wishart {
                n,
                alpha,
                seed,
                verify,
                out,
                force,
            } => commands::generate_wishart(WishartSpec::new(n, alpha, seed)?, verify, &out, force),
            GenerateKind::FiveNode { couplings, out, force } => {
                commands::generate_five_node(couplings.as_deref(), &out, force)
            }
        },
        Command::Sparsify {
            bundle,
            copies,
            max_degree,
            force,
        } => commands::sparsify(&bundle, SparsifyParams { copies, max_degree }, force),
        Command::Schedule {
            bundle,
            config,
            seed,
            out,
        } => commands::schedule(&bundle, config.as_deref(), seed, out.as_deref()),
        Command::Run {
            config,
            baseline,
            force,
        } => commands::run(&config, baseline, force, threads),
        Command::Kl {
            trace,
            bundle,
            beta,
            points,
            out,
        } => commands::kl(&trace, &bundle, beta, points, out.as_deref()),
        Command::Analyze {
            traces,
            bundle,
            policy,
            threshold,
            resamples,
            seed,
            out,
            report,
        } => commands::analyze(
            &traces,
            &bundle,
            policy.into(),
            threshold,
            resamples,
            seed,
            out.as_deref(),
            report.as_deref(),
        ),
        Command::Collapse { curves, options, out } => {
            commands::collapse(&curves, options.as_deref(), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    if let Err(e) = pool.build_global() {
        log::error!("thread pool: {e}");
        return ExitCode::from(2);
    }
    match dispatch(cli.command, rayon::current_num_threads()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
