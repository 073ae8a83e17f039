use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use zerocurrent::ensemble::Representation;
use zerocurrent::mc::{McError, Method};
use zerocurrent::theory::TheoryError;
use zerocurrent::zerofind::ZeroError;

mod commands;
mod config;
mod output;
mod selftest;

use config::{FamilyConfig, RunConfig, WindowConfig};

#[derive(Debug, Error)]
pub enum CliError {
    /// A hypothesis or verdict failed; exit code 1.
    #[error("{0}")]
    Failed(String),
    #[error("config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        match e {
            McError::AuditFailed(_) => CliError::Failed(e.to_string()),
            McError::TooFewTrials(_) | McError::SupportOutsideWindow(_) | McError::BadSweep => {
                CliError::Config(e.to_string())
            }
            McError::Theory(t) => t.into(),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<TheoryError> for CliError {
    fn from(e: TheoryError) -> Self {
        match e {
            TheoryError::SupportEscape { .. } | TheoryError::InvalidTestFunction(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ZeroError> for CliError {
    fn from(e: ZeroError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "zerocurrent", version, about = "Sample Gaussian holomorphic ensembles and check their zero statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the growth hypotheses of the family on the window.
    Audit(Common),
    /// Limit density, curve and pairings (plus exact expectations when `n` is set).
    Theory(Common),
    /// Monte Carlo run at `n`: empirical pairings and zero lists.
    Simulate(Common),
    /// Sweep over `n_list` comparing Monte Carlo, exact expectation and limit.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Empirical JSON files from `simulate` to reuse instead of rerunning those `n`.
        #[arg(long = "input", value_name = "FILE")]
        inputs: Vec<PathBuf>,
        /// Debug: drop the 1/(2 pi) factor on the curve measure (negative control).
        #[arg(long, hide = true)]
        debug_wrong_normalization: bool,
    },
    /// Built-in invariant suite.
    Selftest {
        #[arg(long)]
        threads: Option<usize>,
        /// Also write `selftest.json` here.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn parse_serde<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// Flags mirror config keys and take precedence over the file.
#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Map component (repeat for each one); replaces `map`.
    #[arg(long = "map", value_name = "EXPR")]
    map: Vec<String>,
    /// Built-in family name; replaces `[family]`.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// aberth | subdivide | auto
    #[arg(long, value_parser = parse_serde::<Method>)]
    method: Option<Method>,
    /// full_tensor | symmetric_multinomial
    #[arg(long, value_parser = parse_serde::<Representation>)]
    representation: Option<Representation>,
    /// Square window `[-h, h]^2`; replaces `[window]`.
    #[arg(long)]
    window_half: Option<f64>,
    #[arg(long)]
    quad_nodes: Option<usize>,
    #[arg(long)]
    retain_zeros: Option<bool>,
    #[arg(long)]
    audit_override: bool,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn into_config(self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if !self.map.is_empty() {
            cfg.map = self.map;
        }
        if let Some(f) = self.family {
            cfg.family = FamilyConfig::Builtin { builtin: f };
        }
        if self.n.is_some() {
            cfg.n = self.n;
        }
        if self.n_list.is_some() {
            cfg.n_list = self.n_list;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(r) = self.representation {
            cfg.representation = r;
        }
        if let Some(h) = self.window_half {
            cfg.window = WindowConfig {
                half: Some(h),
                ..WindowConfig::default()
            };
        }
        if let Some(q) = self.quad_nodes {
            cfg.quad_nodes = q;
        }
        if self.retain_zeros.is_some() {
            cfg.retain_zeros = self.retain_zeros;
        }
        cfg.audit_override |= self.audit_override;
        if let Some(d) = self.output_dir {
            cfg.output_dir = d;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        Ok(cfg)
    }
}

fn set_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(k) = threads {
        if k == 0 {
            return Err(CliError::Config("threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Selftest { threads, output_dir } => {
            set_threads(threads)?;
            selftest::run(output_dir.as_deref())
        }
        Command::Audit(c) => with_config(c, commands::audit),
        Command::Theory(c) => with_config(c, commands::theory),
        Command::Simulate(c) => with_config(c, commands::simulate),
        Command::Compare {
            common,
            inputs,
            debug_wrong_normalization,
        } => with_config(common, |r| commands::compare(r, &inputs, debug_wrong_normalization)),
    }
}

fn with_config(c: Common, f: impl FnOnce(&config::Resolved) -> Result<(), CliError>) -> Result<(), CliError> {
    let resolved = c.into_config()?.resolve()?;
    set_threads(resolved.config.threads)?;
    f(&resolved)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
