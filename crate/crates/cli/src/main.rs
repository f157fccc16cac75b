use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hadamard_prox::par::Execution;
use proxcat::config::Overrides;
use proxcat::mean::{mean, MeanArgs};
use proxcat::run::{run, RunArgs};
use proxcat::verify::{verify, VerifyArgs};
use proxcat::{CliError, Outcome, SpaceArgs, SpaceChoice};

/// Proximal point and gradient-flow experiments on Hadamard spaces.
///
/// Exit status: 0 when every certificate passes, 2 when one fails or is
/// inconclusive, 1 on invalid input or solver errors. Set PROX_LOG to
/// control logging (e.g. PROX_LOG=info).
#[derive(Parser)]
#[command(name = "proxcat", version)]
struct Cli {
    /// Run sequentially instead of on the thread pool.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SpaceOpts {
    #[arg(long, value_enum)]
    space: SpaceChoice,
    /// Dimension, or matrix order for spd; inferred from points when given.
    #[arg(long)]
    dimension: Option<usize>,
    /// Tree description file (JSON) for --space tree.
    #[arg(long)]
    tree: Option<PathBuf>,
}

impl From<SpaceOpts> for SpaceArgs {
    fn from(o: SpaceOpts) -> Self {
        SpaceArgs { kind: o.space, dimension: o.dimension, tree: o.tree }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the configuration's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides stop.max_iterations.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Weighted mean (p = 2) or median (p = 1) of a point list.
    Mean {
        #[arg(long)]
        points: PathBuf,
        #[command(flatten)]
        space: SpaceOpts,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
        p: u8,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1000)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Randomized checks of the metric, projection and convexity invariants.
    Verify {
        #[command(flatten)]
        space: SpaceOpts,
        #[arg(long, default_value_t = 1000)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Points to include in the samples (JSON list).
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<Outcome, CliError> {
    let execution = if cli.sequential { Execution::Sequential } else { Execution::default() };
    match cli.command {
        Command::Run { config, out, seed, budget } => run(&RunArgs {
            config,
            out,
            overrides: Overrides { seed, budget },
            execution,
        }),
        Command::Mean { points, space, p, lambda, budget, seed, out } => mean(&MeanArgs {
            points,
            space: space.into(),
            p,
            lambda,
            budget,
            seed,
            out,
        }),
        Command::Verify { space, budget, seed, points, out } => {
            let (report, outcome) = verify(&VerifyArgs {
                space: space.into(),
                budget,
                seed,
                points,
                out,
                execution,
            })?;
            for c in &report.checks {
                println!("{:<40} {:?}", c.name, c.verdict);
            }
            Ok(outcome)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PROX_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors share the input-error status
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(outcome) => {
            for path in &outcome.outputs {
                println!("wrote {}", path.display());
            }
            for line in &outcome.failures {
                eprintln!("FAIL {line}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
