//! `pinnflow` command-line front end.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Marks failures caused by the numerics rather than by the inputs.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct NumericalAbort(pub String);

#[derive(Parser, Debug)]
#[command(name = "pinnflow", version, about = "Physics-informed surrogates for steady laminar flow")]
struct Cli {
    /// Worker threads for point-parallel evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network from a run config.
    Train {
        config: PathBuf,
        /// Run directory; defaults to `[output] dir` of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Force fixed-size reduction chunks.
        #[arg(long)]
        deterministic: bool,
        /// Continue from this checkpoint instead of a fresh initialisation.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Replace an existing run directory.
        #[arg(long)]
        overwrite: bool,
    },
    /// Compare a checkpoint against a reference solution.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Evaluate at these points (reference interpolated by nearest
        /// neighbour) instead of at the reference points.
        #[arg(long)]
        points: Option<PathBuf>,
        /// Geometry parameter in meters (parametric checkpoints).
        #[arg(long)]
        k: Option<f64>,
        /// Directory for `report.txt` and `report.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Export the predicted field at a set of points.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// CSV with `x,y[,z]` columns (point-set files work too).
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        overwrite: bool,
    },
    /// Verify analytic derivatives against finite differences.
    Checkgrad {
        config: PathBuf,
        /// Highest input-derivative order to check.
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, default_value_t = 16)]
        points: usize,
        /// Use identity activations, making all second derivatives zero.
        #[arg(long)]
        linear: bool,
        /// Perturb the analytic derivatives (harness self-test; must fail).
        #[arg(long)]
        corrupt: bool,
    },
    /// Train every (depth, width) combination and tabulate the results.
    Gridsearch {
        config: PathBuf,
        /// Comma-separated hidden-layer widths.
        #[arg(long, value_delimiter = ',', required = true)]
        widths: Vec<usize>,
        /// Comma-separated hidden-layer counts.
        #[arg(long, value_delimiter = ',', required = true)]
        depths: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Write a collocation point set for one of the built-in geometries.
    Generate {
        geometry: Geometry,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Moving boundary points instead of a fixed geometry (cylinder).
        #[arg(long)]
        parametric: bool,
        /// Full-size point counts.
        #[arg(long)]
        full: bool,
        /// Override the volume point count.
        #[arg(long)]
        volume: Option<usize>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Write the analytic channel-flow solution at random interior points.
    Reference {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        overwrite: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Geometry {
    Channel2d,
    Cylinder3d,
    Tjunction3d,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<NumericalAbort>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
