//! `hdreason`: train, evaluate and simulate hyperdimensional knowledge graph
//! completion from a flat TOML config plus flag overrides.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hdreason::hdc::Metric;

use crate::commands::Ctx;
use crate::config::{parse_name, ConfigLayer, RunConfig};
use crate::error::CliError;

/// Hyperdimensional knowledge graph completion and accelerator simulation.
#[derive(Debug, Parser)]
#[command(name = "hdreason", version, about)]
struct Cli {
    /// Flat TOML run configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigLayer,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a dataset and write the binary cache and a summary.
    Ingest,
    /// Train and write a checkpoint.
    Train,
    /// Rank a split with a checkpoint.
    Eval,
    /// Rank vertices by how strongly one vertex's memory recalls them.
    Reconstruct {
        /// Vertex name or id.
        #[arg(long)]
        vertex: String,
        /// Bind candidates with this relation (name or id) first.
        #[arg(long)]
        relation: Option<String>,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, default_value = "cosine", value_parser = parse_name::<Metric>)]
        metric: Metric,
    },
    /// Simulate one training batch on the accelerator and sweep cache sizes.
    Simulate {
        /// Write the measured epoch schedule as JSON lines.
        #[arg(long)]
        emit_trace: Option<PathBuf>,
        /// Replay a recorded schedule instead of scheduling the dataset.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Evaluate with a fixed-point forward pass.
    QuantizeEval,
    /// Evaluate with a fraction of hypervector dimensions removed.
    DropDimsEval,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let base = match &cli.config {
        Some(path) => ConfigLayer::from_file(path)?,
        None => ConfigLayer::default(),
    };
    let cfg = RunConfig::resolve(base.overlay(&cli.overrides))?;
    let ctx = Ctx::new(cfg)?;
    match cli.command {
        Command::Ingest => commands::ingest(&ctx),
        Command::Train => commands::train(&ctx),
        Command::Eval => commands::eval(&ctx),
        Command::Reconstruct { vertex, relation, top, metric } => {
            commands::reconstruct(&ctx, &vertex, relation.as_deref(), top, metric)
        }
        Command::Simulate { emit_trace, trace } => commands::simulate(&ctx, emit_trace.as_deref(), trace.as_deref()),
        Command::QuantizeEval => commands::quantize_eval(&ctx),
        Command::DropDimsEval => commands::drop_dims_eval(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hdreason: {e}");
            e.exit_code()
        }
    }
}
