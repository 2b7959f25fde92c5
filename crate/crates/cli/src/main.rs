use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use fedsel::config::{render, ExperimentConfig};
use fedsel::harness::{self, RunPlan};
use fedsel::presets::{self, PRESETS};
use fedsel::summary;
use fedsel_core::selection::StrategyKind;

#[derive(Parser)]
#[command(name = "fedsel", version, about = "Client-selection experiments for federated averaging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one (strategy, m, seed) cell of a config.
    Run(RunArgs),
    /// Run every (strategy, m, seed) cell and summarise.
    Sweep(SweepArgs),
    /// Tabulate finished runs per (strategy, m).
    Summarize(SummarizeArgs),
    /// Materialise a config's dataset into a binary cache file.
    GenData(GenDataArgs),
    /// List the shipped presets, or print one.
    Presets { name: Option<String> },
}

#[derive(Args)]
struct Common {
    /// Config file, or the name of a shipped preset.
    #[arg(long)]
    config: String,
    /// Output directory (overrides output.out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate accuracy and Jain index every N rounds.
    #[arg(long)]
    eval_every: Option<usize>,
    /// Number of communication rounds (overrides train.rounds).
    #[arg(long)]
    rounds: Option<usize>,
    /// Continue runs from their checkpoints where present.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// rand, pow-d, rpow-d or ucb-cs (required if the config lists several).
    #[arg(long)]
    strategy: Option<StrategyKind>,
    /// Run seed (default: the config's first seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Clients per round (default: from the config).
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated strategies (default: from the config).
    #[arg(long, value_delimiter = ',')]
    strategies: Vec<StrategyKind>,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Comma-separated clients-per-round values.
    #[arg(long, value_delimiter = ',')]
    m_values: Vec<usize>,
    /// Loss level for the rounds-to-threshold column.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Run directories, or directories containing them.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Where to write summary.csv / summary.txt (default: the first dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    config: String,
    #[arg(long)]
    out: PathBuf,
}

fn apply_common(cfg: &mut ExperimentConfig, c: &Common) {
    if let Some(out) = &c.out {
        cfg.output.out_dir = out.clone();
    }
    if let Some(e) = c.eval_every {
        cfg.output.eval_every = e;
    }
    if let Some(r) = c.rounds {
        cfg.train.rounds = r;
    }
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let mut cfg = presets::load_config(&args.common.config)?;
    apply_common(&mut cfg, &args.common);
    let strategy = match (args.strategy, cfg.select.strategies.as_slice()) {
        (Some(s), _) => s,
        (None, [only]) => *only,
        (None, _) => bail!("the config lists several strategies; pick one with --strategy"),
    };
    cfg.select.strategies = vec![strategy];
    if let Some(seed) = args.seed {
        cfg.output.seeds = vec![seed];
    }
    cfg.output.seeds.truncate(1);
    if let Some(m) = args.m {
        cfg.output.m_values = vec![m];
    }
    cfg.validate()?;

    let ds = cfg.dataset.load()?;
    let m = *cfg
        .resolve_m(ds.num_clients())
        .first()
        .context("config resolves to no m value")?;
    let plan = RunPlan {
        strategy,
        m,
        seed: cfg.output.seeds[0],
    };
    let pool = harness::worker_pool()?;
    let outcome = pool.install(|| harness::execute_run(&cfg, &ds, plan, &cfg.output.out_dir, args.common.resume))?;
    println!(
        "{}: final loss {:.6}, jain {:.4} ({})",
        plan.dir_name(),
        outcome.final_loss,
        outcome.final_jain,
        outcome.dir.display()
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> anyhow::Result<()> {
    let mut cfg = presets::load_config(&args.common.config)?;
    apply_common(&mut cfg, &args.common);
    if !args.strategies.is_empty() {
        cfg.select.strategies = args.strategies;
    }
    if !args.seeds.is_empty() {
        cfg.output.seeds = args.seeds;
    }
    if !args.m_values.is_empty() {
        cfg.output.m_values = args.m_values;
    }
    let threshold = args.threshold.or(cfg.output.loss_threshold);
    cfg.validate()?;

    let ds = cfg.dataset.load()?;
    let plans = harness::plan_sweep(&cfg, ds.num_clients());
    let out = cfg.output.out_dir.clone();
    let pool = harness::worker_pool()?;
    let outcomes = harness::run_sweep(&cfg, &ds, &plans, &out, args.common.resume, &pool)?;
    let dirs: Vec<PathBuf> = outcomes.iter().map(|o| o.dir.clone()).collect();
    let text = summary::summarize(&dirs, threshold, &out)?;
    print!("{text}");
    Ok(())
}

fn summarize(args: SummarizeArgs) -> anyhow::Result<()> {
    let out = args.out.clone().unwrap_or_else(|| args.dirs[0].clone());
    let text = summary::summarize(&args.dirs, args.threshold, &out)?;
    print!("{text}");
    Ok(())
}

fn gen_data(args: GenDataArgs) -> anyhow::Result<()> {
    let cfg = presets::load_config(&args.config)?;
    let ds = cfg.dataset.load()?;
    let source = render(&cfg);
    fedsel_core::data::save_dataset(&args.out, &ds, &source)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "{} clients, {} training samples, {} test samples -> {}",
        ds.num_clients(),
        ds.total_train_samples(),
        ds.test_set().len(),
        args.out.display()
    );
    Ok(())
}

fn list_presets(name: Option<String>) -> anyhow::Result<()> {
    match name {
        Some(n) => {
            let text = presets::preset_text(&n).with_context(|| format!("no preset named `{n}`"))?;
            print!("{text}");
        }
        None => {
            for (n, text) in PRESETS {
                let blurb = text.lines().next().unwrap_or("").trim_start_matches('#').trim();
                println!("{n:<16} {blurb}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Summarize(a) => summarize(a),
        Command::GenData(a) => gen_data(a),
        Command::Presets { name } => list_presets(name),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
