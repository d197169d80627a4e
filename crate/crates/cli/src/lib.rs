//! The `jumpexp` command line: expansion prices, smile grids, Monte Carlo
//! validation and bootstrap calibration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod error;
pub mod input;

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "jumpexp",
    version,
    about = "Expansion pricing for local-volatility jump-diffusion models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PayoffArg {
    Call,
    Put,
    Digital,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Price one option with the expansion formula (JSON on stdout).
    Price {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        payoff: PayoffArg,
        #[arg(long)]
        strike: f64,
        #[arg(long)]
        maturity: f64,
        /// Also print the proxy price and both correction terms.
        #[arg(long)]
        breakdown: bool,
    },
    /// Implied-volatility grid over maturities and strikes relative to spot.
    Smile {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated maturities in years.
        #[arg(long, value_delimiter = ',', required = true)]
        maturities: Vec<f64>,
        /// Comma-separated strikes as decimals of spot, e.g. 0.85,1,1.2.
        #[arg(long, value_delimiter = ',', required = true)]
        strikes: Vec<f64>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Implied-vol error of the expansion against Monte Carlo, in bp.
    Validate {
        #[arg(long)]
        model: PathBuf,
        /// CSV with columns maturity_years,relative_strike.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value_t = 2_000_000)]
        paths: u64,
        /// Time steps per year.
        #[arg(long, default_value_t = 250)]
        steps: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cap on total path-steps over all maturities.
        #[arg(long, default_value_t = 20_000_000_000)]
        budget: u128,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit jumps and per-maturity CEV parameters to implied-vol quotes.
    Calibrate {
        /// CSV with columns maturity_years,strike,implied_vol (absolute strikes).
        #[arg(long)]
        quotes: PathBuf,
        #[arg(long)]
        spot: f64,
        /// JSON with optional "rate" and "dividend", each a number or a curve.
        #[arg(long)]
        rate: Option<PathBuf>,
        /// JSON calibration settings; unspecified fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Result JSON, readable as a model file.
        #[arg(long)]
        out: PathBuf,
        /// Residual CSV in bp; defaults to the result path with extension
        /// `residuals.csv`.
        #[arg(long)]
        residuals: Option<PathBuf>,
    },
    /// Size constants and error-envelope shapes of a model (JSON on stdout).
    Diagnostics {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        maturity: f64,
    },
}

/// Run a parsed command, returning the process exit code. Errors go to
/// stderr as one JSON object.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Price {
            model,
            payoff,
            strike,
            maturity,
            breakdown,
        } => commands::price(&model, payoff, strike, maturity, breakdown),
        Command::Smile {
            model,
            maturities,
            strikes,
            out,
        } => commands::smile(&model, &maturities, &strikes, out.as_deref()),
        Command::Validate {
            model,
            grid,
            paths,
            steps,
            seed,
            budget,
            out,
        } => commands::validate(&model, &grid, paths, steps, seed, budget, out.as_deref()),
        Command::Calibrate {
            quotes,
            spot,
            rate,
            config,
            out,
            residuals,
        } => commands::calibrate(
            &quotes,
            spot,
            rate.as_deref(),
            config.as_deref(),
            &out,
            residuals.as_deref(),
        ),
        Command::Diagnostics { model, maturity } => commands::diagnostics(&model, maturity),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
