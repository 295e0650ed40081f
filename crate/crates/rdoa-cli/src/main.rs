//! `rdoa` binary: simulate / estimate / crb subcommands.
//!
//! Thread count follows rayon's `RAYON_NUM_THREADS` environment variable.
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use rdoa_cli::config::{load_config, LossChoice};
use rdoa_cli::experiment::{
    crb_to_csv, rows_to_csv, run_crb, run_estimate, run_experiment, write_output, EstimateArgs,
};
use rdoa_cli::Result;
use rdoa_core::{EstimatorConfig, LossKind};

#[derive(Parser)]
#[command(
    name = "rdoa",
    version,
    about = "Robust sparse DOA estimation: Monte-Carlo sweeps, single-shot estimation, CRBs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum LossArg {
    Gauss,
    Huber,
    Mvt,
    Tyler,
}

impl From<LossArg> for LossChoice {
    fn from(a: LossArg) -> Self {
        LossChoice(match a {
            LossArg::Gauss => LossKind::Gauss,
            LossArg::Huber => LossKind::Huber,
            LossArg::Mvt => LossKind::Mvt,
            LossArg::Tyler => LossKind::Tyler,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte-Carlo RMSE sweep described by a config file; writes the
    /// CSV to the config's output path and echoes it to stdout
    Simulate {
        /// INI-style experiment description
        config: PathBuf,
        /// Full-scale profile: 18001 grid points, 250 runs (slow)
        #[arg(long)]
        full_scale: bool,
        /// Report measured seconds per run instead of the reproducible 0.000
        #[arg(long)]
        timing: bool,
        /// Override the config's output path
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Estimate DOAs from a stored snapshot file (half-wavelength ULA)
    Estimate {
        /// Snapshot file in the RDOA binary format
        file: PathBuf,
        /// Number of sources to report
        #[arg(long)]
        k: usize,
        /// Loss function driving the M-estimator
        #[arg(long, value_enum)]
        loss: LossArg,
        /// Huber quantile q (huber loss only)
        #[arg(long)]
        q: Option<f64>,
        /// MVT loss degrees of freedom ν (mvt loss only)
        #[arg(long)]
        nu: Option<f64>,
        /// Stepsize μ of the power update
        #[arg(long)]
        mu: Option<f64>,
        /// Convergence window: stop once the active set is stable this long
        #[arg(long)]
        z: Option<usize>,
        /// Iteration cap
        #[arg(long)]
        jmax: Option<usize>,
        /// Pruning dynamic range for the power grid
        #[arg(long)]
        gamma_range: Option<f64>,
        /// Grid size M of the search dictionary
        #[arg(long, default_value_t = 1801)]
        grid: usize,
    },
    /// Tabulate Cramér-Rao bounds over a config's sweep (no simulation)
    Crb {
        /// INI-style experiment description
        config: PathBuf,
        /// Write the CSV here instead of only stdout
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            full_scale,
            timing,
            output,
        } => {
            let mut cfg = load_config(&config)?;
            if full_scale {
                cfg.apply_full_scale();
            }
            if let Some(path) = output {
                cfg.output = path;
            }
            let rows = run_experiment(&cfg)?;
            let csv = rows_to_csv(&rows, timing);
            write_output(&cfg.output, &csv)?;
            print!("{csv}");
            eprintln!("wrote {} rows to {}", rows.len(), cfg.output.display());
            Ok(())
        }
        Command::Estimate {
            file,
            k,
            loss,
            q,
            nu,
            mu,
            z,
            jmax,
            gamma_range,
            grid,
        } => {
            let defaults = EstimatorConfig::default();
            let args = EstimateArgs {
                k,
                loss: loss.into(),
                huber_q: q.unwrap_or(0.9),
                mvt_nu: nu.unwrap_or(2.1),
                grid_size: grid,
                estimator: EstimatorConfig {
                    stepsize: mu.unwrap_or(defaults.stepsize),
                    conv_window: z.unwrap_or(defaults.conv_window),
                    max_iters: jmax.unwrap_or(defaults.max_iters),
                    gamma_range: gamma_range.unwrap_or(defaults.gamma_range),
                    ..defaults
                },
            };
            let report = run_estimate(&file, &args)?;
            println!("{report}");
            Ok(())
        }
        Command::Crb { config, output } => {
            let cfg = load_config(&config)?;
            let points = run_crb(&cfg)?;
            let csv = crb_to_csv(&points);
            if let Some(path) = output {
                write_output(&path, &csv)?;
            }
            print!("{csv}");
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
