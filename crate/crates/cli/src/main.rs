//! `cellquant`: command-line driver for the cellquant engine.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use cellquant::error::ErrorKind;
use cellquant::io::manifest::MANIFEST_VERSION;
use cellquant::io::tensor::MAGIC;
use cellquant::metrics::{REPORT_SCHEMA, REPORT_SCHEMA_VERSION};
use cellquant::{Error, ENGINE_VERSION};
use clap::{Parser, Subcommand};

use crate::config::{RunConfig, CONFIG_ENV};

#[derive(Parser)]
#[command(
    name = "cellquant",
    about = "Cell segmentation post-processing, evaluation and dataset refinement",
    disable_version_flag = true
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print human-readable tables instead of JSON on stdout.
    #[arg(long, global = true)]
    table: bool,
    /// Seed for every randomized step; echoed into outputs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Print engine and file-format versions.
    #[arg(short = 'V', long)]
    version: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Standardize a directory of PNG images into fixed-size patches.
    Standardize(commands::prep::StandardizeArgs),
    /// Extract 64×64 cell crops and a cell manifest from a patch manifest.
    ExtractCells(commands::prep::ExtractArgs),
    /// Write synthetic flow fields and one-hot probability maps for a patch manifest.
    MakeFlows(commands::prep::MakeFlowsArgs),
    /// Turn flow and probability maps into an instance map.
    Segment(commands::seg::SegmentArgs),
    /// Assign a class to every instance by majority vote.
    Classify(commands::seg::ClassifyArgs),
    /// Export instances as GeoJSON polygons.
    Polygons(commands::seg::PolygonsArgs),
    /// Rewrite a broad class from external classifier predictions.
    Relabel(commands::refine::RelabelArgs),
    /// Merge two relabeled cell manifests into the refined vocabulary.
    Merge(commands::refine::MergeArgs),
    /// Compute R², PQ/SQ/DQ and accuracy with bootstrap intervals.
    Evaluate(commands::eval::EvaluateArgs),
    /// Evaluate a loss and its gradient on tensor fixtures.
    LossEval(commands::eval::LossEvalArgs),
}

/// Settings shared by every subcommand.
pub struct Context {
    pub config: RunConfig,
    pub table: bool,
}

fn version_text() -> String {
    format!(
        "cellquant {}\ntensor format {}\nmanifest version {}\nmetric report {} v{}",
        ENGINE_VERSION,
        String::from_utf8_lossy(MAGIC),
        MANIFEST_VERSION,
        REPORT_SCHEMA,
        REPORT_SCHEMA_VERSION
    )
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::InvalidInput => 2,
        ErrorKind::Invariant => 3,
        ErrorKind::Io => 4,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(j) = cli.jobs {
        config.jobs = Some(j);
    }
    if let Some(j) = config.jobs {
        if j == 0 {
            return Err(Error::InvalidInput("--jobs must be at least 1".into()));
        }
        // a second initialization only happens in tests; ignoring it is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let ctx = Context { config, table: cli.table };
    let Some(command) = cli.command else {
        return Err(Error::InvalidInput("no subcommand given (see --help)".into()));
    };
    match command {
        Command::Standardize(a) => commands::prep::standardize(&ctx, a),
        Command::ExtractCells(a) => commands::prep::extract_cells(&ctx, a),
        Command::MakeFlows(a) => commands::prep::make_flows(&ctx, a),
        Command::Segment(a) => commands::seg::segment(&ctx, a),
        Command::Classify(a) => commands::seg::classify(&ctx, a),
        Command::Polygons(a) => commands::seg::polygons(&ctx, a),
        Command::Relabel(a) => commands::refine::relabel(&ctx, a),
        Command::Merge(a) => commands::refine::merge(&ctx, a),
        Command::Evaluate(a) => commands::eval::evaluate(&ctx, a),
        Command::LossEval(a) => commands::eval::loss_eval(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.version {
        println!("{}", version_text());
        return ExitCode::SUCCESS;
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(exit_code(&e))
        }
    }
}
