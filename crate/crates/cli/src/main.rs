use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use blood_cli::commands::{cmd_analyze, cmd_eval, cmd_generate, cmd_report, cmd_score, cmd_train, Context};
use blood_cli::manifest::{record_stage, StageRecord};
use blood_cli::{CliError, Result, RunConfig};
use clap::{Parser, Subcommand};

/// Between-layer smoothness OOD detection on synthetic benchmarks.
///
/// Exit codes: 0 success, 1 I/O or corrupt file, 2 config error,
/// 3 missing artifact, 4 numerical failure.
#[derive(Parser)]
#[command(name = "blood", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run config; defaults apply to anything it leaves out
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run only this seed instead of the config's seed list
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Scoring threads (0 = all cores); results do not depend on it
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Output directory, overriding `out_dir`
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Also write LaTeX tables (eval, report)
    #[arg(long, global = true)]
    latex: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write the ID splits and per-shift OOD sets as CSV
    Generate,
    /// Train one model per seed (plus ensemble members if `ensm` is listed)
    Train,
    /// Score test and OOD instances with every configured detector
    Score,
    /// AUROC, AUPR-IN and FPR@95 per shift, detector and seed, plus the summary table
    Eval,
    /// Representation change, cartography, shift sweep and MDL
    Analyze,
    /// Markdown report over all seeds
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Train => "train",
            Command::Score => "score",
            Command::Eval => "eval",
            Command::Analyze => "analyze",
            Command::Report => "report",
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    let ctx = Context::new(cfg, cli.jobs, cli.latex);
    let start = Instant::now();
    let written = match cli.command {
        Command::Generate => cmd_generate(&ctx),
        Command::Train => cmd_train(&ctx),
        Command::Score => cmd_score(&ctx),
        Command::Eval => cmd_eval(&ctx),
        Command::Analyze => cmd_analyze(&ctx),
        Command::Report => cmd_report(&ctx),
    }?;
    let record = StageRecord {
        seeds: ctx.cfg.seeds.clone(),
        artifacts: written.iter().map(|p| ctx.layout.relative(p)).collect(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    record_stage(&ctx.layout, &ctx.cfg, cli.command.name(), record)?;
    for p in &written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_byte(&e))
        }
    }
}

fn exit_byte(e: &CliError) -> u8 {
    e.exit_code() as u8
}
