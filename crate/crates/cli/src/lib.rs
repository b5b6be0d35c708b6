//! Command-line front end: flat config files with flag overrides, one
//! subcommand per experiment, and CSV/JSONL output.
//!
//! Exit codes: 0 when every contract passed, 1 on usage, config or I/O
//! errors, 2 when a statistical contract failed.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::io::Write;

use clap::{Args, Parser, Subcommand};

pub use commands::Outcome;
pub use config::{OutputFormat, RunConfig};
pub use error::CliError;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONTRACT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bbm", version, about = "Branching Brownian motion with drift and absorption")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate replicates and write per-census counts and martingale values.
    Simulate(Flags),
    /// First and second moment oracles, optionally against Monte Carlo.
    Moments(Flags),
    /// Goodness-of-fit suites for the samplers.
    Verify(Flags),
    /// Convergence of rescaled set counts to nu(B) D.
    Kesten(Flags),
    /// Convergence of the empirical law of survivors to nu.
    Qsd(Flags),
    /// Mean-one and uniform-integrability probes of D.
    Martingale(Flags),
    /// Decay of the truncation gap in the window size M.
    Truncation(Flags),
    /// Survival frequency over a grid of (c, r).
    Phase(Flags),
    /// The t_k sampling schedule.
    Schedule(Flags),
}

/// Flags shared by every subcommand. Each one overrides the same key of the
/// config file.
#[derive(Debug, Default, Args)]
pub struct Flags {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Drift speed c > 0.
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<String>,
    /// Branching rate r > 0.
    #[arg(long, allow_hyphen_values = true)]
    pub r: Option<String>,
    /// `dyadic` or `pmf:p0,p1,...`.
    #[arg(long)]
    pub offspring: Option<String>,
    /// Starting position of the initial particle (default 1).
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Final time; the default depends on the command.
    #[arg(long, allow_hyphen_values = true)]
    pub horizon: Option<String>,
    /// Spacing of the uniform census grid.
    #[arg(long = "census-dt")]
    pub census_dt: Option<String>,
    /// Comma-separated census times.
    #[arg(long = "census-grid")]
    pub census_grid: Option<String>,
    /// Number of independent replicates.
    #[arg(long)]
    pub replicates: Option<String>,
    /// Overridden by the BBM_SEED environment variable.
    #[arg(long)]
    pub seed: Option<String>,
    /// Window size M of the truncated population.
    #[arg(long = "trunc-M")]
    pub trunc_m: Option<String>,
    /// Interval set `lo,hi;lo,hi` with `inf` allowed; repeatable.
    #[arg(long = "set")]
    pub sets: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
    /// Write only the CSV or only the JSONL files.
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<String>,
    /// Comma-separated drift values for `phase`.
    #[arg(long = "c-grid")]
    pub c_grid: Option<String>,
    /// Comma-separated branching rates for `phase`.
    #[arg(long = "r-grid")]
    pub r_grid: Option<String>,
    /// Last index of the `schedule` table (default 10000).
    #[arg(long = "k-max")]
    pub k_max: Option<String>,
    /// Window constant in M_k = delta log k (default 1).
    #[arg(long)]
    pub delta: Option<String>,
    /// Two-spine samples per time for `moments` (default 0).
    #[arg(long = "spine-samples")]
    pub spine_samples: Option<String>,
}

impl Flags {
    /// Reads the config file, if any, then applies the flags and finally
    /// the `BBM_SEED` override.
    pub fn resolve(&self, env_seed: Option<&str>) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                RunConfig::from_text(&text)?
            }
            None => RunConfig::default(),
        };
        let scalar = [
            ("c", &self.c),
            ("r", &self.r),
            ("offspring", &self.offspring),
            ("x0", &self.x0),
            ("horizon", &self.horizon),
            ("census_dt", &self.census_dt),
            ("census_grid", &self.census_grid),
            ("replicates", &self.replicates),
            ("seed", &self.seed),
            ("trunc_m", &self.trunc_m),
            ("out", &self.out),
            ("threads", &self.threads),
            ("c_grid", &self.c_grid),
            ("r_grid", &self.r_grid),
            ("k_max", &self.k_max),
            ("delta", &self.delta),
            ("spine_samples", &self.spine_samples),
        ];
        for (key, value) in scalar {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if !self.sets.is_empty() {
            cfg.sets.clear();
            for s in &self.sets {
                cfg.set("set", s)?;
            }
        }
        if let Some(f) = self.format {
            cfg.format = Some(f);
        }
        cfg.apply_env_seed(env_seed)?;
        Ok(cfg)
    }
}

impl Command {
    pub fn flags(&self) -> &Flags {
        match self {
            Self::Simulate(f)
            | Self::Moments(f)
            | Self::Verify(f)
            | Self::Kesten(f)
            | Self::Qsd(f)
            | Self::Martingale(f)
            | Self::Truncation(f)
            | Self::Phase(f)
            | Self::Schedule(f) => f,
        }
    }

    pub fn execute(&self, cfg: &RunConfig) -> Result<Outcome, CliError> {
        match self {
            Self::Simulate(_) => commands::cmd_simulate(cfg),
            Self::Moments(_) => commands::cmd_moments(cfg),
            Self::Verify(_) => commands::cmd_verify(cfg),
            Self::Kesten(_) => commands::cmd_kesten(cfg),
            Self::Qsd(_) => commands::cmd_qsd(cfg),
            Self::Martingale(_) => commands::cmd_martingale(cfg),
            Self::Truncation(_) => commands::cmd_truncation(cfg),
            Self::Phase(_) => commands::cmd_phase(cfg),
            Self::Schedule(_) => commands::cmd_schedule(cfg),
        }
    }
}

/// Runs a command line and returns the process exit code. Messages go to
/// `out` and errors to `err`.
pub fn run<I, T>(args: I, env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_PASS;
        }
    };
    let result = cli
        .command
        .flags()
        .resolve(env_seed)
        .and_then(|cfg| with_threads(&cfg, || cli.command.execute(&cfg)).map(|o| (cfg, o)));
    match result {
        Ok((cfg, outcome)) => {
            for line in &outcome.lines {
                let _ = writeln!(out, "{line}");
            }
            let _ = writeln!(out, "output: {}", cfg.out.display());
            if outcome.passed {
                EXIT_PASS
            } else {
                EXIT_CONTRACT
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

/// Runs `f` on a pool with the configured thread count, or on the global
/// pool when none is set.
fn with_threads<R: Send>(cfg: &RunConfig, f: impl FnOnce() -> Result<R, CliError> + Send) -> Result<R, CliError> {
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("`threads`: {e}")))?
            .install(f),
        None => f(),
    }
}
