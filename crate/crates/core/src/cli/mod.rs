//! Command-line front end: configuration, commands and CSV artifacts.

mod commands;
pub mod config;
pub mod output;
mod verify;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use commands::{cmd_gap, cmd_simulate, cmd_solve, cmd_steady};
pub use config::{ModeChoice, PolicyKind, RunConfig};
pub use verify::{cmd_verify, CheckOutcome, VerifyCheck, VerifyReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("numerical failure: {0}")]
    Numerical(#[from] crate::Error),

    #[error("verification failed: {failed} check(s) out of tolerance")]
    VerificationFailed { failed: usize },
}

impl CliError {
    /// 0 success, 1 usage/config/io, 2 numerical, 3 verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Numerical(_) => 2,
            CliError::VerificationFailed { .. } => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "aoi-pricing",
    version,
    about = "Pricing for fresh status updates from strategic users"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub replications: Option<usize>,
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    #[arg(long, global = true)]
    pub initial_delta: Option<f64>,
    /// Arrival probability.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Upper end of the uniform sampling-cost distribution.
    #[arg(long, global = true)]
    pub cost_max: Option<f64>,
    #[arg(long, global = true)]
    pub discount: Option<f64>,
    /// Age right after an accepted update.
    #[arg(long, global = true)]
    pub reset_age: Option<f64>,
    #[arg(long, global = true)]
    pub initial_age: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Finite-horizon trajectory (trajectory.csv, summary.txt).
    Solve {
        /// Follow the unclipped closed-form ages instead of clipped prices.
        #[arg(long)]
        relaxed: bool,
    },
    /// Stationary quantities and feasibility flags (steady.csv).
    Steady,
    /// Cost gap between stationary and finite-horizon policies (gap.csv).
    Gap {
        /// Comma-separated horizons.
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
    },
    /// Monte Carlo evaluation of a policy (sim_*.csv).
    Simulate {
        #[arg(long)]
        policy: Option<PolicyKind>,
        /// Price for the constant policy.
        #[arg(long)]
        price: Option<f64>,
        #[arg(long)]
        mode: Option<ModeChoice>,
    },
    /// Self-checks against oracles and simulation; nonzero exit on failure.
    Verify {
        #[arg(long)]
        oracle_horizon: Option<usize>,
        /// Negative control: scale the Q table before checking.
        #[arg(long, hide = true)]
        corrupt_q: Option<f64>,
    },
}

impl Overrides {
    fn apply(&self, config: &mut RunConfig) {
        macro_rules! set {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { config.$target = v; })*
            };
        }
        set!(
            out => out,
            horizon => horizon,
            seed => seed,
            replications => replications,
            tolerance => tolerance,
            max_iter => max_iter,
            initial_delta => initial_delta,
            alpha => arrival_prob,
            cost_max => cost_max,
            discount => discount,
            reset_age => reset_age,
            initial_age => initial_age,
        );
    }
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = match &cli.overrides.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_text(&text)?
        }
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut config);
    match &cli.command {
        Command::Gap { horizons: Some(h) } => config.horizons = h.clone(),
        Command::Simulate {
            policy,
            price,
            mode,
        } => {
            if let Some(p) = policy {
                config.policy = *p;
            }
            if let Some(p) = price {
                config.constant_price = *p;
            }
            if let Some(m) = mode {
                config.mode = *m;
            }
        }
        Command::Verify {
            oracle_horizon: Some(h),
            ..
        } => config.oracle_horizon = *h,
        _ => {}
    }
    Ok(config)
}

/// Parse arguments and run one command. Messages go to stdout/stderr;
/// the return value carries the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = resolve_config(cli)?;
    config.validate()?;
    std::fs::create_dir_all(&config.out).map_err(|source| CliError::Io {
        path: config.out.clone(),
        source,
    })?;
    match &cli.command {
        Command::Solve { relaxed } => cmd_solve(&config, *relaxed).map(|_| ()),
        Command::Steady => cmd_steady(&config).map(|_| ()),
        Command::Gap { .. } => cmd_gap(&config).map(|_| ()),
        Command::Simulate { .. } => cmd_simulate(&config).map(|_| ()),
        Command::Verify { corrupt_q, .. } => {
            let report = cmd_verify(&config, *corrupt_q)?;
            print!("{}", report.render());
            report.into_result()
        }
    }
}
