use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use fpsusy::config::RunConfig;
use fpsusy::runner::{self, RunOptions, Subcommand};
use fpsusy::{par, Error, Execution};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Spectrum,
    Index,
    Partition,
    Evolve,
    Simulate,
    Nicolai,
    CpdCheck,
    Correlate,
    All,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Spectrum => Subcommand::Spectrum,
            Command::Index => Subcommand::Index,
            Command::Partition => Subcommand::Partition,
            Command::Evolve => Subcommand::Evolve,
            Command::Simulate => Subcommand::Simulate,
            Command::Nicolai => Subcommand::Nicolai,
            Command::CpdCheck => Subcommand::CpdCheck,
            Command::Correlate => Subcommand::Correlate,
            Command::All => Subcommand::All,
        }
    }
}

/// Spectral analysis of stochastic flows on low-dimensional grids.
///
/// Exit status: 0 when every asserted invariant holds, 1 when some fail
/// (see `failures` in report.json), 2 for configuration or usage errors.
#[derive(Debug, Parser)]
#[command(name = "fpsusy", version)]
struct Cli {
    /// pipeline to run
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration (optional for `all`)
    #[arg(long)]
    config: Option<PathBuf>,
    /// output directory (overrides the config's `output`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// base seed (overrides the config's `seed`)
    #[arg(long)]
    seed: Option<u64>,
    /// relative zero-mode threshold
    #[arg(long)]
    tol_zero: Option<f64>,
    /// breaking threshold on Re E
    #[arg(long)]
    eps_gamma: Option<f64>,
    /// breaking threshold on Im E
    #[arg(long)]
    eps_e: Option<f64>,
    /// run everything on the calling thread
    #[arg(long)]
    sequential: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be ≥ 1");
            return ExitCode::from(2);
        }
        par::init_threads(n);
    }
    let opts = RunOptions {
        out: cli.out.clone(),
        seed: cli.seed,
        tol_zero: cli.tol_zero,
        eps_gamma: cli.eps_gamma,
        eps_e: cli.eps_e,
        threads: cli.threads,
        exec: if cli.sequential { Execution::Sequential } else { Execution::Parallel },
    };
    match run(&cli, &opts) {
        Ok(outcome) => {
            for f in &outcome.failures {
                eprintln!("FAIL [{}] {}", f.invariant, f.message);
            }
            eprintln!(
                "{}: {} failure(s); report in {}",
                Subcommand::from(cli.command).as_str(),
                outcome.failures.len(),
                outcome.out_dir.display()
            );
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(Error::Config { pointer, message }) => {
            eprintln!("config error at {pointer}: {message}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli, opts: &RunOptions) -> fpsusy::Result<runner::Outcome> {
    let cfg = match &cli.config {
        Some(path) => {
            let mut cfg = RunConfig::load(path)?;
            runner::apply_overrides(&mut cfg, opts)?;
            Some(cfg)
        }
        None => None,
    };
    runner::run(cli.command.into(), cfg.as_ref(), opts)
}
