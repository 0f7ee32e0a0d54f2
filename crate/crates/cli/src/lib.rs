//! Command-line front end of the `graph2graph` library.

pub mod args;
pub mod classifier;
pub mod commands;

use anyhow::{anyhow, Result};

pub use args::{Cli, Command};
pub use commands::{execute, read_manifest, resolve, RunManifest, RUN_FILE};

/// Resolves flags or a replayed manifest and runs the command.
pub fn run(cli: Cli) -> Result<()> {
    let (command, seed) = resolve(cli.config.as_ref(), cli.command, cli.seed)?;
    let out = cli.out_dir.ok_or_else(|| anyhow!("--out-dir is required"))?;
    log::info!("{} (seed {seed}) -> {}", command.name(), out.display());
    execute(&command, seed, &out)
}
