use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use shortdyn_cli::config::load_config_file;
use shortdyn_cli::{execute, resolve_config, summary, CliError, CommandKind, RunConfig, RunReport};

/// Short-time Heisenberg-picture dynamics through truncated Pauli expansions.
#[derive(Debug, Parser)]
#[command(name = "shortdyn", version)]
struct Cli {
    /// TOML file with defaults for any run option; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Expand O(t) (or the propagator) and report terms, statistics and bounds.
    Expand(RunConfig),
    /// A priori bounds for the chosen order and segments, without expanding.
    Bounds(RunConfig),
    /// Estimate tr(O(t) rho) on an initial state or from recorded shadows.
    Estimate(RunConfig),
    /// Estimate the Loschmidt amplitude tr(rho U(t)).
    Loschmidt(RunConfig),
    /// Check a guess Hamiltonian against the system through the residual of one observable.
    Verify(RunConfig),
    /// Energy after imaginary-time evolution, as a ratio of two expansions.
    #[command(name = "imag-energy")]
    ImagEnergy(RunConfig),
    /// Truncated estimate of tr e^{-2 tau H}.
    #[command(name = "trace-z")]
    TraceZ(RunConfig),
}

fn run(cli: Cli) -> Result<(RunReport, Option<PathBuf>), CliError> {
    let (kind, flags) = match cli.command {
        Command::Expand(c) => (CommandKind::Expand, c),
        Command::Bounds(c) => (CommandKind::Bounds, c),
        Command::Estimate(c) => (CommandKind::Estimate, c),
        Command::Loschmidt(c) => (CommandKind::Loschmidt, c),
        Command::Verify(c) => (CommandKind::Verify, c),
        Command::ImagEnergy(c) => (CommandKind::ImagEnergy, c),
        Command::TraceZ(c) => (CommandKind::TraceZ, c),
    };
    let file = cli.config.as_deref().map(load_config_file).transpose()?;
    let cfg = resolve_config(flags, file)?;
    let report = execute(kind, &cfg)?;
    Ok((report, cfg.output))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((report, output)) => {
            let json = report.to_json();
            match output {
                Some(p) if p.as_os_str() == "-" => println!("{json}"),
                Some(p) => {
                    if let Err(e) = std::fs::write(&p, json + "\n") {
                        eprintln!("error: {}: {e}", p.display());
                        return ExitCode::from(2);
                    }
                    print!("{}", summary(&report));
                }
                None => print!("{}", summary(&report)),
            }
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
