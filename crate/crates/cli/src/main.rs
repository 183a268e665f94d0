use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

mod args;
mod commands;
mod manifest;

use args::{Cli, Command};
use manifest::{default_path, digests, RunManifest};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical {
        message: String,
        checkpoint: Option<PathBuf>,
    },
    Io(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn numerical(message: impl Into<String>, checkpoint: Option<PathBuf>) -> Self {
        CliError::Numerical {
            message: message.into(),
            checkpoint,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn with_checkpoint(self, path: &Path) -> Self {
        match self {
            CliError::Numerical { message, .. } => CliError::Numerical {
                message,
                checkpoint: Some(path.to_path_buf()),
            },
            other => other,
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => write!(f, "{m}"),
            CliError::Numerical { message, checkpoint } => {
                write!(f, "{message}")?;
                if let Some(p) = checkpoint {
                    write!(f, "\nlast good checkpoint: {}", p.display())?;
                }
                Ok(())
            }
        }
    }
}

impl From<coorbital::Error> for CliError {
    fn from(e: coorbital::Error) -> Self {
        match e {
            coorbital::Error::Domain(_) | coorbital::Error::BracketInvalid(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::numerical(e.to_string(), None),
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    if let Command::Replay(r) = &cli.command {
        return commands::replay(&r.path);
    }
    let start = Instant::now();
    let outputs = commands::execute(&cli.command)?;
    let manifest = RunManifest {
        subcommand: cli.command.name().to_string(),
        parameters: cli.command.without_resume(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: digests(&outputs)?,
    };
    let path = cli
        .manifest
        .clone()
        .unwrap_or_else(|| default_path(&outputs[0]));
    manifest.write(&path)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
