//! `mmprep`: reproducible data-preparation runs for multimodal pre-training.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::commands::{corpus, eval, mixture, pack, report};
use crate::config::Config;
use crate::error::{CliResult, Failure, Kind};
use crate::output::{verify_manifest, write_run, RunOutput};

#[derive(Parser, Debug)]
#[command(name = "mmprep", version, about = "Multimodal pre-training data preparation")]
struct Cli {
    /// Seed for every randomized step
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config; flags override it, it overrides defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build interleaved and text-only corpora from raw pages
    CorpusBuild(corpus::BuildArgs),
    /// Image-dedup interleaved docs and near-dedup text docs
    CorpusDedup(corpus::DedupArgs),
    /// Sample a deterministic training mixture
    MixtureSnapshot(mixture::SnapshotArgs),
    /// Pack a snapshot into fixed-length sequences
    Pack(pack::PackArgs),
    /// Print the few-shot image token budget
    VisgeomBudget(report::BudgetArgs),
    /// Print peak LR, weight decay and schedule samples for a model size
    ScalingPlan(report::PlanArgs),
    /// Route router logits and report load-balance and z losses
    MoeAudit(report::AuditArgs),
    /// Score predictions (CIDEr or VQA accuracy) or compute a meta-average
    EvalScore(eval::ScoreArgs),
    /// Re-hash the files named by a run manifest
    Verify {
        manifest: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CorpusBuild(_) => "corpus-build",
            Command::CorpusDedup(_) => "corpus-dedup",
            Command::MixtureSnapshot(_) => "mixture-snapshot",
            Command::Pack(_) => "pack",
            Command::VisgeomBudget(_) => "visgeom-budget",
            Command::ScalingPlan(_) => "scaling-plan",
            Command::MoeAudit(_) => "moe-audit",
            Command::EvalScore(_) => "eval-score",
            Command::Verify { .. } => "verify",
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    let seed = cfg.global("seed", cli.seed)?.unwrap_or(0);
    if let Some(jobs) = cfg.global::<usize>("jobs", cli.jobs)? {
        if jobs == 0 {
            return Err(Failure::bad_args("--jobs must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::new(Kind::Io, "ThreadPool", e))?;
    }

    let name = cli.command.name();
    let (out, run): (Option<PathBuf>, RunOutput) = match cli.command {
        Command::CorpusBuild(a) => corpus::build(a, &cfg).map(|(o, r)| (Some(o), r))?,
        Command::CorpusDedup(a) => corpus::dedup(a, &cfg).map(|(o, r)| (Some(o), r))?,
        Command::MixtureSnapshot(a) => mixture::run(a, &cfg, seed).map(|(o, r)| (Some(o), r))?,
        Command::Pack(a) => pack::run(a, &cfg).map(|(o, r)| (Some(o), r))?,
        Command::VisgeomBudget(a) => report::visgeom_budget(a, &cfg)?,
        Command::ScalingPlan(a) => report::scaling_plan(a, &cfg)?,
        Command::MoeAudit(a) => report::moe_audit(a, &cfg)?,
        Command::EvalScore(a) => eval::run(a, &cfg)?,
        Command::Verify { manifest } => {
            let n = verify_manifest(&manifest)?;
            println!("ok files={n}");
            return Ok(());
        }
    };
    if let Some(dir) = out {
        write_run(&dir, name, seed, &run)?;
    }
    print!("{}", run.stdout);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let f = Failure::bad_args(e.to_string().trim());
            eprintln!("{}", f.to_json_line());
            return f.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json_line());
            f.exit_code()
        }
    }
}
