//! Command-line entry point. Single-stage subcommands read and write the
//! `--out` directory directly; `pipeline` runs the configured stages in
//! `<out>/<config hash>-s<seed>`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use autothink::harness::{Config, Pipeline, Stage};

#[derive(Parser)]
#[command(name = "autothink", version, about = "Adaptive think / no-think training laboratory")]
struct Cli {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate the task world.
    GenTasks,
    /// Label tasks L1-L5 from the reference tiers.
    Calibrate,
    /// Build both SFT corpora and train the warm-up checkpoint.
    Sft,
    /// Keep tasks with a pass count strictly between 0 and the sample count.
    Filter,
    /// Vanilla GRPO from the SFT checkpoint.
    TrainGrpo,
    /// Adaptive GRPO from the SFT checkpoint.
    TrainAgrpo,
    /// Per-level accuracy and thinking rate.
    Eval,
    /// All-think, no-think and adaptive tables.
    CompareModes,
    /// Summarise the artifacts in the output directory.
    Report,
    /// Run `run.stages` in a fresh run directory.
    Pipeline,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        Some(match self {
            Command::GenTasks => Stage::GenTasks,
            Command::Calibrate => Stage::Calibrate,
            Command::Sft => Stage::Sft,
            Command::Filter => Stage::Filter,
            Command::TrainGrpo => Stage::TrainGrpo,
            Command::TrainAgrpo => Stage::TrainAgrpo,
            Command::Eval => Stage::Eval,
            Command::CompareModes => Stage::CompareModes,
            Command::Report => Stage::Report,
            Command::Pipeline => return None,
        })
    }
}

fn run(cli: Cli) -> autothink::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    match cli.command.stage() {
        Some(stage) => Pipeline::new(cfg, &cli.out).run_stage(stage),
        None => {
            let p = Pipeline::in_run_dir(cfg, &cli.out);
            p.run()?;
            println!("{}", p.dir().display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
