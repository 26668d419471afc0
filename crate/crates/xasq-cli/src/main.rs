use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

mod commands;
mod config;

use config::Config;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(String),
}

impl CliError {
    fn context(self, what: &str) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{what}: {m}")),
            CliError::Numeric(m) => CliError::Numeric(format!("{what}: {m}")),
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Numeric(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl From<xasq::Error> for CliError {
    fn from(e: xasq::Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

/// Time-domain X-ray absorption spectra and fault-tolerant resource estimates.
#[derive(Parser, Debug)]
#[command(name = "xasq", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Accepted both before and after the subcommand; later values win, `--set` lists concatenate.
#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `paths.out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides any config key, e.g. `--set sampling.shots=20000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// More log output; repeat for debug.
    #[arg(short, long, action = ArgAction::Count)]
    verbose: u8,
}

impl Common {
    fn merge(&self, later: &Common) -> Common {
        Common {
            config: later.config.clone().or_else(|| self.config.clone()),
            seed: later.seed.or(self.seed),
            out: later.out.clone().or_else(|| self.out.clone()),
            threads: later.threads.or(self.threads),
            set: self.set.iter().chain(&later.set).cloned().collect(),
            verbose: self.verbose + later.verbose,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact reference spectrum and low-lying eigenvalues.
    Exact(Common),
    /// Simulated spectrum from sampled Hadamard-test series.
    Spectrum(Common),
    /// Fit the compressed double factorization.
    Factorize(Common),
    /// Resource table over active-space sizes.
    Resources(Common),
    /// Trotter eigenphase error and Y₃ study.
    TrotterError(Common),
    /// Optimal shot-allocation exponent.
    AlphaOpt(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Exact(c)
            | Command::Spectrum(c)
            | Command::Factorize(c)
            | Command::Resources(c)
            | Command::TrotterError(c)
            | Command::AlphaOpt(c) => c,
        }
    }
}

fn run(command: &Command, opts: &Common) -> Result<(), CliError> {
    let mut overrides = opts.set.clone();
    if let Some(s) = opts.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(o) = &opts.out {
        overrides.push(format!("paths.out={}", toml::Value::String(o.display().to_string())));
    }
    let cfg = Config::load(opts.config.as_deref(), &overrides)?;
    if let Some(n) = opts.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    log::info!("config hash {}", cfg.hash());
    match command {
        Command::Exact(_) => commands::exact(&cfg),
        Command::Spectrum(_) => commands::spectrum(&cfg),
        Command::Factorize(_) => commands::factorize(&cfg),
        Command::Resources(_) => commands::resources(&cfg),
        Command::TrotterError(_) => commands::trotter_error(&cfg),
        Command::AlphaOpt(_) => commands::alpha_opt(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = cli.common.merge(cli.command.common());
    let level = match opts.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli.command, &opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
