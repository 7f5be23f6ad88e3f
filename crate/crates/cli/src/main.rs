use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use pekarlab::io::run::{run_file, Command};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Subcommand {
    ValidateMedium,
    GroundState,
    AsymptoticsSweep,
    TravelingWave,
    MassReport,
    Dynamics,
    GapScan,
    TwPropagation,
}

impl From<Subcommand> for Command {
    fn from(s: Subcommand) -> Self {
        match s {
            Subcommand::ValidateMedium => Command::ValidateMedium,
            Subcommand::GroundState => Command::GroundState,
            Subcommand::AsymptoticsSweep => Command::AsymptoticsSweep,
            Subcommand::TravelingWave => Command::TravelingWave,
            Subcommand::MassReport => Command::MassReport,
            Subcommand::Dynamics => Command::Dynamics,
            Subcommand::GapScan => Command::GapScan,
            Subcommand::TwPropagation => Command::TwPropagation,
        }
    }
}

/// Ground states, traveling waves, effective masses and dynamics of the
/// regularized Landau-Pekar model.
///
/// Exit status: 0 when every verdict passes, 1 on a runtime failure or a
/// failed verdict, 2 on invalid configuration or medium.
#[derive(Debug, Parser)]
#[command(name = "pekarlab", version)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    command: Subcommand,

    /// Run configuration in `key = value` format.
    #[arg(short, long)]
    config: PathBuf,

    /// Suppress the summary on stdout.
    #[arg(short, long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = pekarlab::configure_threads_from_env();
    let outcome = match run_file(cli.command.into(), &cli.config) {
        Ok(o) => o,
        Err((code, message)) => {
            eprintln!("error: {message}");
            return ExitCode::from(code as u8);
        }
    };
    if !cli.quiet {
        println!("{} ({threads} threads)", outcome.command);
        for m in &outcome.messages {
            println!("  {m}");
        }
        for a in &outcome.artifacts {
            println!("  wrote {}", a.display());
        }
    }
    for f in &outcome.failures {
        eprintln!("failure: {f}");
    }
    ExitCode::from(outcome.exit_code as u8)
}
