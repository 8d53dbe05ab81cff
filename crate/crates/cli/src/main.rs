//! `jcm-lab`: batch runs of the k-photon supersymmetric Jaynes-Cummings model.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 on bad
//! usage or configuration.

// `!(x < tol)` is used on purpose so that NaN fails every check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Artifacts;
use crate::config::ScenarioConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "jcm-lab",
    version,
    about = "Invariant-based exact solutions checked against a direct propagator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the superalgebra identities and the block structure.
    VerifyAlgebra(Common),
    /// Solve the auxiliary equations and compare exact states with the oracle.
    Propagate(Common),
    /// Sweep the cyclic geometric phase over the configured angles.
    Berry(Common),
    /// Compare the coherent-state atomic inversion with the oracle.
    Coherent(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output.directory`.
    #[arg(long, env = "JCM_LAB_OUT")]
    out: Option<PathBuf>,
    /// Worker threads for block lists and angle sweeps.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,
}

fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    let (common, name) = match &cli.command {
        Command::VerifyAlgebra(c) => (c, "verify-algebra"),
        Command::Propagate(c) => (c, "propagate"),
        Command::Berry(c) => (c, "berry"),
        Command::Coherent(c) => (c, "coherent"),
    };
    let cfg = ScenarioConfig::load(&common.config)?;
    let dir = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("jcm-out"));
    let mut out = Artifacts::new(dir, cfg.precision);
    let jobs = common.jobs.map(usize::from);

    let summary = match cli.command {
        Command::VerifyAlgebra(_) => commands::verify_algebra_cmd(&cfg)?,
        Command::Propagate(_) => commands::propagate_cmd(&cfg, jobs, &mut out)?,
        Command::Berry(_) => commands::berry_cmd(&cfg, jobs, &mut out)?,
        Command::Coherent(_) => commands::coherent_cmd(&cfg, jobs, &mut out)?,
    };
    let mut lines = summary.into_result()?;
    if !out.written().is_empty() {
        lines.push(format!(
            "wrote {} file(s) to {}",
            out.written().len(),
            out.dir().display()
        ));
    }
    lines.push(format!("{name}: pass"));
    Ok(lines)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
