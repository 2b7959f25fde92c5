//! Running single experiments and sweeps.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use fedsel_core::data::FederatedDataset;
use fedsel_core::engine::{Checkpoint, Simulation};
use fedsel_core::metrics::loss_histogram;
use fedsel_core::selection::StrategyKind;
use rayon::prelude::*;

use crate::config::{render, ExperimentConfig};
use crate::output::{
    self, BanditWriter, MetricsRow, MetricsWriter, RunManifest, RunPaths, RunStatus, BANDIT_FILE,
    CHECKPOINT_FILE, CLIENT_LOSSES_FILE, FAIRNESS_FILE, HISTOGRAM_FILE, METRICS_FILE,
};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "FEDSEL_THREADS";

/// One cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunPlan {
    pub strategy: StrategyKind,
    pub m: usize,
    pub seed: u64,
}

impl RunPlan {
    pub fn dir_name(&self) -> String {
        format!("{}_m{}_seed{}", self.strategy, self.m, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub plan: RunPlan,
    pub dir: PathBuf,
    pub final_loss: f64,
    pub final_jain: f64,
}

/// Cross product of the config's strategies, `m` values and seeds, in that
/// nesting order.
pub fn plan_sweep(cfg: &ExperimentConfig, num_clients: usize) -> Vec<RunPlan> {
    let mut plans = Vec::new();
    for &m in &cfg.resolve_m(num_clients) {
        for &strategy in &cfg.select.strategies {
            for &seed in &cfg.output.seeds {
                plans.push(RunPlan { strategy, m, seed });
            }
        }
    }
    plans
}

/// A pool sized by `FEDSEL_THREADS` (rayon's default when unset).
pub fn worker_pool() -> anyhow::Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
            anyhow::ensure!(n > 0, "{THREADS_ENV} must be a positive integer, got `{v}`");
            Some(n)
        }
        Err(_) => None,
    };
    sized_pool(threads)
}

pub fn sized_pool(threads: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

/// Execute one run into `out_dir/<plan dir>`. With `resume`, continue from
/// the run's checkpoint when one exists.
pub fn execute_run(
    cfg: &ExperimentConfig,
    ds: &FederatedDataset,
    plan: RunPlan,
    out_dir: &Path,
    resume: bool,
) -> anyhow::Result<RunOutcome> {
    let k = ds.num_clients();
    let dir = out_dir.join(plan.dir_name());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let spec = cfg.model_spec(ds);
    let train = cfg.train_config(plan.m, plan.seed);
    let strategy_spec = cfg.strategy_spec(plan.strategy, plan.m);
    let strategy = strategy_spec.build(k, plan.m)?;

    let bandit_dump = cfg.select.bandit_dump && plan.strategy == StrategyKind::UcbCs;
    let checkpointing = cfg.output.checkpoint_every > 0;
    let started = Instant::now();
    let mut manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        strategy: plan.strategy,
        m: plan.m,
        d: strategy_spec.d,
        seed: plan.seed,
        dataset_seed: cfg.dataset.seed,
        rounds: train.rounds,
        status: RunStatus::Running,
        started_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        wall_seconds: None,
        error: None,
        paths: RunPaths {
            metrics: dir.join(METRICS_FILE),
            fairness: dir.join(FAIRNESS_FILE),
            client_losses: dir.join(CLIENT_LOSSES_FILE),
            histogram: dir.join(HISTOGRAM_FILE),
            bandit: bandit_dump.then(|| dir.join(BANDIT_FILE)),
            checkpoint: checkpointing.then(|| dir.join(CHECKPOINT_FILE)),
        },
        config: render(cfg),
    };

    let ckpt_path = dir.join(CHECKPOINT_FILE);
    let resumed = resume && ckpt_path.is_file();
    let mut resumed_at = None;
    let (mut sim, mut metrics) = if resumed {
        let ckpt = Checkpoint::load(&ckpt_path).with_context(|| format!("reading {}", ckpt_path.display()))?;
        let round = ckpt.round;
        resumed_at = Some(round);
        let sim = Simulation::resume(ds, &spec, train, strategy, ckpt)?;
        (sim, MetricsWriter::truncate_to(&manifest.paths.metrics, round)?)
    } else {
        let sim = Simulation::new(ds, &spec, train, strategy)?;
        (sim, MetricsWriter::create(&manifest.paths.metrics)?)
    };
    manifest.save(&dir)?;

    let mut bandit = if bandit_dump {
        let mut w = BanditWriter::create(&dir.join(BANDIT_FILE), resumed_at)?;
        if !resumed {
            if let Some(rows) = sim.strategy().bandit_rows(ds.fractions()) {
                w.write(&rows)?;
            }
        }
        Some(w)
    } else {
        None
    };

    let every = cfg.output.checkpoint_every;
    let mut drive = || -> anyhow::Result<()> {
        while !sim.is_finished() {
            let rec = sim.step()?;
            metrics.write(&MetricsRow::new(&rec, plan.strategy, plan.seed))?;
            if let (Some(w), Some(rows)) = (bandit.as_mut(), sim.strategy().bandit_rows(ds.fractions())) {
                w.write(&rows)?;
            }
            if every > 0 && (rec.round % every == 0 || sim.is_finished()) {
                sim.checkpoint().save(&ckpt_path)?;
            }
        }
        Ok(())
    };
    let result = drive();

    manifest.wall_seconds = Some(started.elapsed().as_secs_f64());
    if let Err(e) = result {
        metrics.abort(&e.to_string())?;
        manifest.status = RunStatus::Aborted;
        manifest.error = Some(e.to_string());
        manifest.save(&dir)?;
        return Err(e.context(format!("run {} aborted", plan.dir_name())));
    }

    let fairness = sim.fairness();
    output::write_fairness(&manifest.paths.fairness, &fairness, plan.strategy, plan.seed, plan.m)?;
    output::write_client_losses(&manifest.paths.client_losses, ds.fractions(), &fairness.losses)?;
    let hist = loss_histogram(&fairness.losses, cfg.output.histogram_bins)?;
    output::write_histogram(&manifest.paths.histogram, &hist)?;
    manifest.status = RunStatus::Completed;
    manifest.save(&dir)?;

    let final_loss = fedsel_core::metrics::global_loss(ds.fractions(), &fairness.losses)?;
    Ok(RunOutcome {
        plan,
        dir,
        final_loss,
        final_jain: fairness.jain,
    })
}

/// Run every plan, concurrently on `pool`. Results come back in plan order;
/// the first failure is returned after all runs finish.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    ds: &FederatedDataset,
    plans: &[RunPlan],
    out_dir: &Path,
    resume: bool,
    pool: &rayon::ThreadPool,
) -> anyhow::Result<Vec<RunOutcome>> {
    let results: Vec<anyhow::Result<RunOutcome>> = pool.install(|| {
        plans
            .par_iter()
            .map(|&plan| execute_run(cfg, ds, plan, out_dir, resume))
            .collect()
    });
    results.into_iter().collect()
}
