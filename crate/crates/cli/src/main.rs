use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use hardsphere_gp::{run, CliError, Subcommand};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Instance,
    Verify,
    Mig,
    Regret,
    Certify,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Instance => Subcommand::Instance,
            Command::Verify => Subcommand::Verify,
            Command::Mig => Subcommand::Mig,
            Command::Regret => Subcommand::Regret,
            Command::Certify => Subcommand::Certify,
        }
    }
}

/// Hard GP bandit instances on the hypersphere.
///
/// Set HSGP_THREADS to cap the number of worker threads.
#[derive(Debug, Parser)]
#[command(name = "hardsphere-gp", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("HSGP_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Config(format!("HSGP_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot configure thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| {
        let text = std::fs::read_to_string(&cli.config)?;
        run(cli.command.into(), &text, cli.seed, &cli.out)
    });
    match result {
        Ok(m) => {
            eprintln!(
                "{} finished: {} files written to {}",
                m.subcommand,
                m.files.len(),
                cli.out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
