use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dualmem_cli::{run, Command, Overrides};

#[derive(Parser)]
#[command(name = "dualmem", version, about = "Two-membrane electrostatic MEMS solver")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fixed-point solve of the full model.
    Solve(Common),
    /// Small-aspect-ratio limit, closed-form oracle, and fold values.
    Smallgap(Common),
    /// Sweep (lambda, mu) and record where the iteration stops converging.
    Sweep(Common),
    /// Aspect-ratio study of the potential correction and limit distances.
    Limits(Common),
    /// Closed-form single-membrane solution against shooting.
    OracleCheck(Common),
}

#[derive(Args)]
struct Common {
    /// TOML file with optional [solve], [smallgap], [sweep], [limits], [oracle] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    nz: Option<usize>,
    /// Worker threads for sweeps and limit rows.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, c) = match cli.command {
        Cmd::Solve(c) => (Command::Solve, c),
        Cmd::Smallgap(c) => (Command::SmallGap, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::Limits(c) => (Command::Limits, c),
        Cmd::OracleCheck(c) => (Command::OracleCheck, c),
    };
    let overrides = Overrides {
        eps: c.eps,
        lambda: c.lambda,
        mu: c.mu,
        r0: c.r0,
        nx: c.nx,
        nz: c.nz,
        workers: c.workers,
    };
    match run(command, c.config.as_deref(), &overrides, c.out.as_deref()) {
        Ok(report) => {
            println!("status: {}", report.status);
            for f in &report.files {
                println!("wrote {} ({} bytes)", f.name, f.bytes);
            }
            ExitCode::from(report.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
