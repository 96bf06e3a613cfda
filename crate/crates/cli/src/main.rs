use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ffsv_cli::commands;
use ffsv_cli::config::PipelineConfig;
use ffsv_cli::error::CliResult;

#[derive(Parser)]
#[command(name = "ffsv", version, about = "Far-field speaker verification pipeline")]
struct Cli {
    /// Pipeline configuration file (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides `run.workers` (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; overrides `paths.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dereverberate, beamform and select; writes enhanced WAVs.
    Enhance {
        /// Input WAV files; the manifest is used when none are given.
        inputs: Vec<PathBuf>,
    },
    /// Sample rooms, write impulse responses and augmented copies.
    Simulate,
    /// Train the speaker network (and the adversarial stage when enabled).
    Train,
    /// Score a trial list.
    Score,
    /// Run all sixteen toggle combinations on a synthetic dev set.
    Ablate,
    /// Grid-search the selection threshold and simulation room set.
    TuneTheta,
}

fn load_config(cli: &Cli) -> CliResult<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.apply_seed(s);
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = &cli.out {
        cfg.paths.out_dir = o.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> CliResult<()> {
    let cfg = load_config(cli)?;
    if cfg.workers > 0 && !ffsv_core::par::init_workers(cfg.workers) {
        log::warn!("worker count could not be applied; using the existing pool");
    }
    match &cli.command {
        Command::Enhance { inputs } => commands::enhance::run(&cfg, inputs).map(drop),
        Command::Simulate => commands::simulate::run(&cfg),
        Command::Train => commands::train::run(&cfg),
        Command::Score => commands::score::run(&cfg).map(drop),
        Command::Ablate => {
            let r = commands::ablate::run(&cfg)?;
            print!("{}", r.table.to_text());
            Ok(())
        }
        Command::TuneTheta => commands::tune::run(&cfg).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}
