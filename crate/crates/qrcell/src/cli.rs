//! Argument parsing and exit codes: 0 on success, 1 on a configuration or
//! input error, 2 when a numerical procedure did not converge.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qrcell_core::protocol::DEFAULT_SEED;

use crate::commands::{self, FitModel, TomoTarget};
use crate::config::Config;
use crate::io::{Format, Report};

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NONCONVERGENCE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "qrcell", version, about = "Trapped-ion quantum repeater cell simulator")]
pub struct Cli {
    /// Scenario file (JSON). Published parameters when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed; overrides `protocol.rng_seed` of the scenario.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Monte Carlo repetitions; overrides `scan.reps` of the scenario.
    #[arg(long, global = true)]
    pub reps: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo of the sequence with the scenario's protocol parameters.
    Simulate,
    /// Fidelities and pair probabilities against the number of trials.
    ScanNmax,
    /// Pair probabilities against channel transmission.
    ScanTransmission,
    /// Fidelity and rate-superiority thresholds.
    Thresholds,
    /// Rates of direct, semi- and fully asynchronous generation.
    Rates,
    /// Detection-efficiency budget.
    Budget,
    /// Fits a fidelity-vs-n_max curve (CSV `n_max,fidelity,sigma`).
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        model: FitModel,
    },
    /// Reconstructs a two-qubit state from counts (CSV `setting,outcome,count`).
    Tomography {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        target: TomoTarget,
    },
}

impl Cli {
    fn config(&self) -> anyhow::Result<Config> {
        let cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        Ok(match self.seed {
            Some(seed) => cfg.with_seed(seed),
            None => cfg,
        })
    }

    pub fn execute(&self) -> anyhow::Result<Report> {
        let cfg = self.config()?;
        let reps = self.reps.unwrap_or(cfg.scan.reps);
        let seed = self.seed.unwrap_or(if self.config.is_some() {
            cfg.protocol.rng_seed
        } else {
            DEFAULT_SEED
        });
        match &self.command {
            Command::Simulate => commands::simulate(&cfg, reps),
            Command::ScanNmax => commands::scan_nmax(&cfg, reps),
            Command::ScanTransmission => commands::scan_transmission(&cfg),
            Command::Thresholds => commands::thresholds(&cfg),
            Command::Rates => commands::rates(&cfg),
            Command::Budget => commands::budget(&cfg),
            Command::Fit { input, model } => commands::fit(&cfg, input, *model),
            Command::Tomography { input, target } => commands::tomography(&cfg, input, *target, seed),
        }
    }

    fn write(&self, report: &Report) -> anyhow::Result<()> {
        match &self.out {
            Some(path) => {
                let mut w = BufWriter::new(File::create(path)?);
                report.write(self.format, &mut w)?;
                w.flush()?;
            }
            None => report.write(self.format, std::io::stdout().lock())?,
        }
        Ok(())
    }
}

pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let report = match cli.execute() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Err(e) = cli.write(&report) {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_CONFIG);
    }
    match &report.failure {
        Some(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_NONCONVERGENCE)
        }
        None => ExitCode::SUCCESS,
    }
}
