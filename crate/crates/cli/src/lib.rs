//! Command-line front end for the dualmem solvers: configuration loading,
//! the study drivers, and deterministic output files.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use anyhow::Result;

pub use commands::{cmd_limits, cmd_oracle_check, cmd_smallgap, cmd_solve, cmd_sweep, CommandReport};
pub use config::{ConfigError, ConfigFile, LoadedConfig, Overrides};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    SmallGap,
    Sweep,
    Limits,
    OracleCheck,
}

/// Loads the config (if any), applies overrides, validates the section of
/// `command`, and runs it. The output directory is `out`, else the
/// config's `out`, else `out/<command>`.
pub fn run(command: Command, config: Option<&Path>, overrides: &Overrides, out: Option<&Path>) -> Result<CommandReport> {
    let loaded = match config {
        Some(p) => LoadedConfig::load(p)?,
        None => LoadedConfig::default(),
    };
    let f = &loaded.file;
    let name = match command {
        Command::Solve => "solve",
        Command::SmallGap => "smallgap",
        Command::Sweep => "sweep",
        Command::Limits => "limits",
        Command::OracleCheck => "oracle-check",
    };
    let dir: PathBuf = out
        .map(Path::to_path_buf)
        .or_else(|| f.out.clone())
        .unwrap_or_else(|| Path::new("out").join(name));
    match command {
        Command::Solve => {
            let mut c = f.solve.clone();
            c.apply(overrides);
            c.validate(&loaded)?;
            cmd_solve(&c, &dir)
        }
        Command::SmallGap => {
            let mut c = f.smallgap.clone();
            c.apply(overrides);
            c.validate(&loaded)?;
            cmd_smallgap(&c, &dir)
        }
        Command::Sweep => {
            let mut c = f.sweep.clone();
            c.apply(overrides);
            c.validate(&loaded)?;
            cmd_sweep(&c, &dir)
        }
        Command::Limits => {
            let mut c = f.limits.clone();
            c.apply(overrides);
            c.validate(&loaded)?;
            cmd_limits(&c, &dir)
        }
        Command::OracleCheck => {
            let c = f.oracle.clone();
            c.validate(&loaded)?;
            cmd_oracle_check(&c, &dir)
        }
    }
}
