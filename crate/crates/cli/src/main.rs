mod args;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use args::Cli;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] euslm_core::Error),

    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },

    /// A check ran to completion and failed.
    #[error("{0}")]
    Check(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use euslm_core::Error;
        match self {
            CliError::Usage(_) | CliError::Core(Error::Config(_)) => 2,
            CliError::Core(Error::Numeric(_)) | CliError::Check(_) => 4,
            _ => 3,
        }
    }
}

fn run() -> Result<(), CliError> {
    let argv = config::expand(std::env::args_os().collect())?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if cli.global.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {} threads: {e}", cli.global.threads)))?;

    let name = cli.command.name();
    let mut global = cli.global.clone();
    let out = global.out.clone().unwrap_or_else(|| PathBuf::from("euslm-out").join(name));
    global.out = Some(out.clone());
    std::fs::create_dir_all(&out).map_err(|source| CliError::File { path: out.clone(), source })?;
    let manifest = config::manifest(name, &global, &cli.command)?;
    let ctx = commands::Ctx { out, seed: global.seed };
    ctx.write("manifest.toml", manifest)?;
    commands::dispatch(&ctx, &cli.command)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
