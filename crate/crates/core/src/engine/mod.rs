//! The FedAvg round loop.
//!
//! Round `r` (1-based): the strategy picks `m` clients, each runs `tau` local
//! SGD steps from the current global model, the server replaces the global
//! model with the plain average of the returned models, and the strategy is
//! shown the reports. Client work within a round may run in parallel; it is
//! merged in client-id order so results do not depend on scheduling.

mod checkpoint;

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use checkpoint::Checkpoint;

use crate::data::{ClientShard, FederatedDataset, SampleSet};
use crate::metrics::{self, FairnessReport};
use crate::model::{self, ModelSpec, ParamVector};
use crate::parallel::{self, Parallelism};
use crate::rng::{self, Domain};
use crate::selection::{sample_std, CommLedger, LossOracle, RoundComm, SelectionContext, SelectionStrategy};
use crate::{Error, Result};

/// Local minibatch size: a fixed `b` drawn uniformly with replacement, or the
/// client's whole shard in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Fixed(usize),
    Full,
}

impl Serialize for BatchSize {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            BatchSize::Fixed(b) => s.serialize_u64(*b as u64),
            BatchSize::Full => s.serialize_str("full"),
        }
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Fixed(u64),
            Named(String),
        }
        match Raw::deserialize(d)? {
            Raw::Fixed(b) => Ok(BatchSize::Fixed(b as usize)),
            Raw::Named(s) if s == "full" => Ok(BatchSize::Full),
            Raw::Named(s) => Err(serde::de::Error::custom(format!(
                "batch size must be a positive integer or \"full\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Local SGD steps per round.
    pub tau: usize,
    pub batch_size: BatchSize,
    pub eta0: f64,
    /// Rounds at which the learning rate halves.
    pub lr_milestones: Vec<usize>,
    pub rounds: usize,
    /// Clients selected per round.
    pub m: usize,
    pub seed: u64,
    /// Test accuracy and Jain's index are computed every `eval_every` rounds
    /// and at the final round.
    pub eval_every: usize,
    pub parallelism: Parallelism,
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 30,
            batch_size: BatchSize::Fixed(50),
            eta0: 0.05,
            lr_milestones: vec![300, 600],
            rounds: 800,
            m: 3,
            seed: 1,
            eval_every: 10,
            parallelism: Parallelism::default(),
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, num_clients: usize) -> Result<()> {
        if self.tau == 0 {
            return Err(Error::config("tau must be at least 1"));
        }
        if self.batch_size == BatchSize::Fixed(0) {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.eta0 >= 0.0 && self.eta0.is_finite()) {
            return Err(Error::config("eta0 must be finite and non-negative"));
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds must be at least 1"));
        }
        if self.m == 0 || self.m > num_clients {
            return Err(Error::config(format!(
                "need 1 <= m <= K, got m = {}, K = {num_clients}",
                self.m
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every must be at least 1"));
        }
        Ok(())
    }
}

/// `m = round(C * K)`, at least 1.
pub fn clients_from_fraction(fraction: f64, num_clients: usize) -> usize {
    ((fraction * num_clients as f64).round() as usize).clamp(1, num_clients.max(1))
}

/// Learning rate for round `r`: `eta0` halved once per milestone `<= r`.
pub fn lr_at(cfg: &TrainConfig, round: usize) -> f64 {
    let halvings = cfg.lr_milestones.iter().filter(|&&m| m <= round).count();
    cfg.eta0 * 0.5f64.powi(halvings as i32)
}

/// What a selected client sends back after its local steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientReport {
    pub client_id: usize,
    /// Minibatch loss at each local step, evaluated before that step's
    /// update.
    pub step_losses: Vec<f64>,
    /// Mean of `step_losses`.
    pub mean_loss: f64,
    pub updated_params: ParamVector,
}

/// Run `tau` local SGD steps on one client starting from `w_global`.
/// Minibatches come from the client's own `(seed, client, round)` stream.
pub fn local_update(
    client: &ClientShard,
    w_global: &ParamVector,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    round: usize,
) -> Result<ClientReport> {
    let n = client.size();
    if n == 0 {
        return Err(Error::config(format!("client {} has no samples", client.client_id)));
    }
    let eta = lr_at(cfg, round);
    let mut rng = rng::stream(cfg.seed, Domain::LocalUpdate, client.client_id as u64, round as u64);
    let mut w = w_global.clone();
    let mut step_losses = Vec::with_capacity(cfg.tau);
    let mut buffer = SampleSet::new(client.samples.feature_dim());
    for _ in 0..cfg.tau {
        let batch = match cfg.batch_size {
            BatchSize::Full => &client.samples,
            BatchSize::Fixed(b) => {
                buffer.clear();
                for _ in 0..b {
                    buffer.push_row_of(&client.samples, rng.random_range(0..n));
                }
                &buffer
            }
        };
        let eval = model::loss_and_grad(spec, &w, batch)?;
        step_losses.push(eval.mean_loss);
        w.axpy(-eta, &eval.gradient)?;
    }
    let mean_loss = step_losses.iter().sum::<f64>() / step_losses.len() as f64;
    Ok(ClientReport {
        client_id: client.client_id,
        step_losses,
        mean_loss,
        updated_params: w,
    })
}

/// Unweighted average of the reported models, summed in ascending client id
/// order whatever the order of `reports`.
pub fn aggregate(reports: &[ClientReport]) -> Result<ParamVector> {
    let first = reports
        .first()
        .ok_or_else(|| Error::config("cannot aggregate zero reports"))?;
    let mut ordered: Vec<&ClientReport> = reports.iter().collect();
    ordered.sort_by_key(|r| r.client_id);
    let mut sum = ParamVector::zeros(first.updated_params.layout().clone());
    for r in ordered {
        sum.axpy(1.0, &r.updated_params)?;
    }
    let m = reports.len() as f64;
    for v in sum.values_mut() {
        *v /= m;
    }
    Ok(sum)
}

/// Metrics of one communication round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub selected: Vec<usize>,
    /// `F(w) = sum_k p_k F_k(w)` at the new global model.
    pub global_train_loss: f64,
    pub test_accuracy: Option<f64>,
    pub jain: Option<f64>,
    pub sigma_t: f64,
    pub eta: f64,
    pub comm: RoundComm,
    pub wall_ms: Option<f64>,
}

/// Exact client losses computed from the dataset on behalf of the server.
pub struct DatasetOracle<'a> {
    pub dataset: &'a FederatedDataset,
    pub spec: &'a ModelSpec,
    pub parallelism: Parallelism,
}

impl LossOracle for DatasetOracle<'_> {
    fn full_losses(&self, clients: &[usize], w: &ParamVector) -> Result<Vec<f64>> {
        let k_total = self.dataset.num_clients();
        if let Some(&bad) = clients.iter().find(|&&k| k >= k_total) {
            return Err(Error::UnknownClient {
                client: bad,
                num_clients: k_total,
            });
        }
        parallel::map(clients, self.parallelism, |&k| {
            model::loss(self.spec, w, &self.dataset.shard(k).samples)
        })
        .into_iter()
        .collect()
    }
}

/// A resumable FedAvg run over one dataset with one strategy.
pub struct Simulation<'a> {
    dataset: &'a FederatedDataset,
    spec: &'a ModelSpec,
    cfg: TrainConfig,
    strategy: Box<dyn SelectionStrategy>,
    global: ParamVector,
    round: usize,
    ledger: CommLedger,
    initial_loss: f64,
    last_client_losses: Vec<f64>,
}

impl<'a> Simulation<'a> {
    /// Start from freshly initialised parameters (seeded by `cfg.seed`).
    pub fn new(
        dataset: &'a FederatedDataset,
        spec: &'a ModelSpec,
        cfg: TrainConfig,
        strategy: Box<dyn SelectionStrategy>,
    ) -> Result<Self> {
        let w0 = model::init_params(spec, cfg.seed)?;
        Self::with_params(dataset, spec, cfg, strategy, w0)
    }

    pub fn with_params(
        dataset: &'a FederatedDataset,
        spec: &'a ModelSpec,
        cfg: TrainConfig,
        strategy: Box<dyn SelectionStrategy>,
        w0: ParamVector,
    ) -> Result<Self> {
        cfg.validate(dataset.num_clients())?;
        spec.validate()?;
        if spec.input_dim != dataset.feature_dim() || spec.num_classes < dataset.num_classes() {
            return Err(Error::config(format!(
                "model expects {} features / {} classes, dataset has {} / {}",
                spec.input_dim,
                spec.num_classes,
                dataset.feature_dim(),
                dataset.num_classes()
            )));
        }
        if w0.layout() != &spec.layout() {
            return Err(Error::Layout("initial parameters do not match the model".into()));
        }
        let losses = metrics::client_losses(dataset, spec, &w0, cfg.parallelism)?;
        let initial_loss = metrics::global_loss(dataset.fractions(), &losses)?;
        Ok(Simulation {
            dataset,
            spec,
            cfg,
            strategy,
            global: w0,
            round: 0,
            ledger: CommLedger::default(),
            initial_loss,
            last_client_losses: losses,
        })
    }

    /// Continue a run from a checkpoint taken with the same dataset, model,
    /// config and strategy kind.
    pub fn resume(
        dataset: &'a FederatedDataset,
        spec: &'a ModelSpec,
        cfg: TrainConfig,
        mut strategy: Box<dyn SelectionStrategy>,
        ckpt: Checkpoint,
    ) -> Result<Self> {
        if ckpt.seed != cfg.seed {
            return Err(Error::config(format!(
                "checkpoint was taken with seed {}, config has {}",
                ckpt.seed, cfg.seed
            )));
        }
        if ckpt.strategy != strategy.kind() {
            return Err(Error::config(format!(
                "checkpoint was taken with strategy {}, config has {}",
                ckpt.strategy,
                strategy.kind()
            )));
        }
        strategy.load_state(ckpt.strategy_state)?;
        let mut sim = Self::with_params(dataset, spec, cfg, strategy, ckpt.params)?;
        sim.round = ckpt.round;
        sim.ledger = ckpt.ledger;
        sim.initial_loss = ckpt.initial_loss;
        Ok(sim)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            round: self.round,
            seed: self.cfg.seed,
            strategy: self.strategy.kind(),
            strategy_state: self.strategy.save_state(),
            ledger: self.ledger.clone(),
            initial_loss: self.initial_loss,
            params: self.global.clone(),
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn strategy(&self) -> &dyn SelectionStrategy {
        self.strategy.as_ref()
    }

    pub fn global_params(&self) -> &ParamVector {
        &self.global
    }

    /// Completed rounds.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn is_finished(&self) -> bool {
        self.round >= self.cfg.rounds
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    /// `F(w)` at the initial model.
    pub fn initial_loss(&self) -> f64 {
        self.initial_loss
    }

    /// `F_k` at the current global model.
    pub fn client_losses(&self) -> &[f64] {
        &self.last_client_losses
    }

    pub fn fairness(&self) -> FairnessReport {
        FairnessReport::new(self.round, self.last_client_losses.clone())
    }

    /// Execute one communication round.
    pub fn step(&mut self) -> Result<RoundRecord> {
        let started = Instant::now();
        let r = self.round + 1;
        let k_total = self.dataset.num_clients();
        let oracle = DatasetOracle {
            dataset: self.dataset,
            spec: self.spec,
            parallelism: self.cfg.parallelism,
        };
        let ctx = SelectionContext {
            round: r,
            num_clients: k_total,
            m: self.cfg.m,
            fractions: self.dataset.fractions(),
            global_params: &self.global,
            oracle: &oracle,
        };
        let mut select_rng = rng::stream(self.cfg.seed, Domain::Selection, r as u64, 0);
        let selection = self.strategy.select(&ctx, &mut select_rng)?;
        let mut selected = selection.clients;
        selected.sort_unstable();
        selected.dedup();
        if selected.len() != self.cfg.m || selected.iter().any(|&k| k >= k_total) {
            return Err(Error::config(format!(
                "{} returned an invalid active set {selected:?}",
                self.strategy.kind()
            )));
        }

        let global = &self.global;
        let reports: Vec<ClientReport> = parallel::map(&selected, self.cfg.parallelism, |&k| {
            local_update(self.dataset.shard(k), global, self.spec, &self.cfg, r)
        })
        .into_iter()
        .collect::<Result<_>>()?;

        let new_global = aggregate(&reports)?;
        self.strategy.observe(r, &reports)?;
        let sigma_t = reports
            .iter()
            .map(|rep| sample_std(&rep.step_losses))
            .fold(0.0, f64::max);

        let losses = metrics::client_losses(self.dataset, self.spec, &new_global, self.cfg.parallelism)?;
        let global_train_loss = metrics::global_loss(self.dataset.fractions(), &losses)?;
        let bad = std::iter::once(global_train_loss)
            .chain(losses.iter().copied())
            .chain(std::iter::once(sigma_t))
            .find(|x| !x.is_finite());
        if let Some(value) = bad {
            return Err(Error::NonFinite { round: r, value });
        }
        let eval_round = r % self.cfg.eval_every == 0 || r == self.cfg.rounds;
        let (test_accuracy, jain) = if eval_round {
            let acc = if self.dataset.test_set().is_empty() {
                None
            } else {
                Some(model::accuracy(self.spec, &new_global, self.dataset.test_set())?)
            };
            (acc, Some(metrics::jain_index(&losses)))
        } else {
            (None, None)
        };

        self.global = new_global;
        self.round = r;
        self.last_client_losses = losses;
        let comm = self.ledger.record(self.cfg.m, selection.extra_messages);
        Ok(RoundRecord {
            round: r,
            selected,
            global_train_loss,
            test_accuracy,
            jain,
            sigma_t,
            eta: lr_at(&self.cfg, r),
            comm,
            wall_ms: self
                .cfg
                .record_wall_time
                .then(|| started.elapsed().as_secs_f64() * 1e3),
        })
    }

    /// Run the remaining rounds, handing each record to `on_round` as soon as
    /// it is produced.
    pub fn run_with<F>(&mut self, mut on_round: F) -> Result<()>
    where
        F: FnMut(&RoundRecord, &Simulation<'a>) -> Result<()>,
    {
        while !self.is_finished() {
            let rec = self.step()?;
            on_round(&rec, self)?;
        }
        Ok(())
    }

    /// Run the remaining rounds and collect their records.
    pub fn run(&mut self) -> Result<Vec<RoundRecord>> {
        let mut out = Vec::with_capacity(self.cfg.rounds - self.round);
        self.run_with(|rec, _| {
            out.push(rec.clone());
            Ok(())
        })?;
        Ok(out)
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<RoundRecord>,
    pub final_params: ParamVector,
    pub initial_loss: f64,
    pub final_fairness: FairnessReport,
    pub ledger: CommLedger,
}

/// Run a full simulation from scratch.
pub fn run(
    dataset: &FederatedDataset,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    strategy: Box<dyn SelectionStrategy>,
) -> Result<RunOutput> {
    let mut sim = Simulation::new(dataset, spec, cfg.clone(), strategy)?;
    let records = sim.run()?;
    Ok(RunOutput {
        records,
        final_params: sim.global_params().clone(),
        initial_loss: sim.initial_loss(),
        final_fairness: sim.fairness(),
        ledger: sim.ledger().clone(),
    })
}
