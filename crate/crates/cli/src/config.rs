//! Experiment configuration files (TOML).
//!
//! ```toml
//! [dataset]
//! type = "synthetic"          # synthetic | dirichlet-idx | cached
//! num_clients = 30
//!
//! [model]
//! kind = "logistic"           # logistic | mlp (mlp needs hidden = [h1, h2])
//!
//! [train]
//! m = 3                       # or fraction = 0.1
//! rounds = 800
//!
//! [select]
//! strategies = ["rand", "pow-d", "rpow-d", "ucb-cs"]
//! d_per_m = 2                 # or a fixed d
//! gamma = 0.7
//!
//! [output]
//! out_dir = "runs/fig1c"
//! seeds = [1, 2, 3]
//! ```
//!
//! Every optional key has a default (see the `Default` impls). Errors name the
//! offending key as a dotted path, e.g. `select.gamma`.

use std::path::{Path, PathBuf};

use fedsel_core::data::{self, FederatedDataset, SyntheticSpec};
use fedsel_core::engine::{clients_from_fraction, BatchSize, TrainConfig};
use fedsel_core::model::{ModelKind, ModelSpec};
use fedsel_core::parallel::Parallelism;
use fedsel_core::selection::{ColdStart, StrategyKind, StrategySpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSource {
    Synthetic,
    DirichletIdx,
    Cached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(rename = "type")]
    pub source: DatasetSource,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_clients: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_shard: Option<usize>,

    // synthetic
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub powerlaw_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_fraction: Option<f64>,

    // dirichlet-idx
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dirichlet_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,

    // cached
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_model_kind")]
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hidden: Vec<usize>,
}

fn default_model_kind() -> ModelKind {
    ModelKind::Logistic
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Logistic,
            hidden: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub tau: usize,
    pub batch_size: BatchSize,
    pub eta0: f64,
    pub lr_milestones: Vec<usize>,
    pub rounds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    pub parallelism: Parallelism,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            tau: t.tau,
            batch_size: t.batch_size,
            eta0: t.eta0,
            lr_milestones: t.lr_milestones,
            rounds: t.rounds,
            m: None,
            fraction: None,
            parallelism: t.parallelism,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectSection {
    pub strategies: Vec<StrategyKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// `d = d_per_m * m` when no fixed `d` is given.
    pub d_per_m: usize,
    pub gamma: f64,
    pub cold_start: ColdStart,
    /// Write per-round bandit statistics (`bandit.csv`) for ucb-cs runs.
    pub bandit_dump: bool,
}

impl Default for SelectSection {
    fn default() -> Self {
        SelectSection {
            strategies: StrategyKind::ALL.to_vec(),
            d: None,
            d_per_m: 2,
            gamma: 0.7,
            cold_start: ColdStart::default(),
            bandit_dump: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub out_dir: PathBuf,
    pub eval_every: usize,
    pub histogram_bins: usize,
    pub seeds: Vec<u64>,
    /// Sweep over these `m`; empty means just the train section's `m`.
    pub m_values: Vec<usize>,
    /// Checkpoint every this many rounds; 0 disables checkpoints.
    pub checkpoint_every: usize,
    pub record_wall_time: bool,
    /// Global-loss level used for rounds-to-threshold in summaries.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_threshold: Option<f64>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            out_dir: PathBuf::from("runs"),
            eval_every: 10,
            histogram_bins: 10,
            seeds: vec![1],
            m_values: Vec::new(),
            checkpoint_every: 0,
            record_wall_time: false,
            loss_threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub select: SelectSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Parse and validate a config file's text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let mut path = e.path().to_string();
        let message = e.inner().to_string();
        // Point missing keys at the key itself, not its section.
        if let Some(key) = message
            .strip_prefix("missing field `")
            .and_then(|rest| rest.split('`').next())
        {
            path = if path == "." { key.to_string() } else { format!("{path}.{key}") };
        }
        ConfigError::Invalid { path, message }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Canonical TOML text; `parse_config(&render(c)) == c` for valid configs.
pub fn render(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("config is always representable as TOML")
}

const SYNTHETIC_KEYS: &[&str] = &[
    "alpha",
    "beta",
    "total_samples",
    "powerlaw_exponent",
    "feature_dim",
    "num_classes",
    "test_fraction",
];
const IDX_KEYS: &[&str] = &[
    "dirichlet_alpha",
    "train_images",
    "train_labels",
    "test_images",
    "test_labels",
];

impl DatasetConfig {
    fn present_keys(&self) -> Vec<&'static str> {
        let flags = [
            ("num_clients", self.num_clients.is_some()),
            ("min_shard", self.min_shard.is_some()),
            ("alpha", self.alpha.is_some()),
            ("beta", self.beta.is_some()),
            ("total_samples", self.total_samples.is_some()),
            ("powerlaw_exponent", self.powerlaw_exponent.is_some()),
            ("feature_dim", self.feature_dim.is_some()),
            ("num_classes", self.num_classes.is_some()),
            ("test_fraction", self.test_fraction.is_some()),
            ("dirichlet_alpha", self.dirichlet_alpha.is_some()),
            ("train_images", self.train_images.is_some()),
            ("train_labels", self.train_labels.is_some()),
            ("test_images", self.test_images.is_some()),
            ("test_labels", self.test_labels.is_some()),
            ("path", self.path.is_some()),
        ];
        flags.iter().filter(|(_, set)| *set).map(|(k, _)| *k).collect()
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let (allowed, required): (Vec<&str>, &[&str]) = match self.source {
            DatasetSource::Synthetic => {
                let mut a = vec!["num_clients", "min_shard"];
                a.extend(SYNTHETIC_KEYS);
                (a, &[])
            }
            DatasetSource::DirichletIdx => {
                let mut a = vec!["num_clients", "min_shard"];
                a.extend(IDX_KEYS);
                (a, &["num_clients", "dirichlet_alpha", "train_images", "train_labels"])
            }
            DatasetSource::Cached => (vec!["path"], &["path"]),
        };
        let present = self.present_keys();
        let type_name = serde_json::to_value(self.source).unwrap();
        let type_name = type_name.as_str().unwrap();
        if let Some(k) = present.iter().find(|k| !allowed.contains(k)) {
            return Err(invalid(
                &format!("dataset.{k}"),
                format!("not used by dataset type `{type_name}`"),
            ));
        }
        if let Some(k) = required.iter().find(|k| !present.contains(k)) {
            return Err(invalid(
                &format!("dataset.{k}"),
                format!("required for dataset type `{type_name}`"),
            ));
        }
        if self.test_images.is_some() != self.test_labels.is_some() {
            return Err(invalid("dataset.test_labels", "test_images and test_labels go together"));
        }
        if self.num_clients == Some(0) {
            return Err(invalid("dataset.num_clients", "must be at least 1"));
        }
        if let Some(a) = self.dirichlet_alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(invalid("dataset.dirichlet_alpha", "must be positive and finite"));
            }
        }
        if self.source == DatasetSource::Synthetic {
            self.synthetic_spec()
                .validate()
                .map_err(|e| invalid("dataset", e.to_string()))?;
        }
        Ok(())
    }

    /// Synthetic generator settings with defaults filled in.
    pub fn synthetic_spec(&self) -> SyntheticSpec {
        let d = SyntheticSpec::default();
        SyntheticSpec {
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            num_clients: self.num_clients.unwrap_or(d.num_clients),
            total_samples: self.total_samples.unwrap_or(d.total_samples),
            powerlaw_exponent: self.powerlaw_exponent.unwrap_or(d.powerlaw_exponent),
            min_shard: self.min_shard.unwrap_or(d.min_shard),
            feature_dim: self.feature_dim.unwrap_or(d.feature_dim),
            num_classes: self.num_classes.unwrap_or(d.num_classes),
            test_fraction: self.test_fraction.unwrap_or(d.test_fraction),
            seed: self.seed,
        }
    }

    /// Number of clients, when it is known without touching the disk.
    pub fn known_num_clients(&self) -> Option<usize> {
        match self.source {
            DatasetSource::Synthetic => Some(self.synthetic_spec().num_clients),
            DatasetSource::DirichletIdx => self.num_clients,
            DatasetSource::Cached => None,
        }
    }

    /// Materialise the dataset. Relative paths are taken from the current
    /// directory.
    pub fn load(&self) -> anyhow::Result<FederatedDataset> {
        use anyhow::Context;
        Ok(match self.source {
            DatasetSource::Synthetic => data::generate_synthetic(&self.synthetic_spec())?,
            DatasetSource::DirichletIdx => {
                let (images, labels) = (self.train_images.as_ref().unwrap(), self.train_labels.as_ref().unwrap());
                let train = data::load_idx(images, labels)
                    .with_context(|| format!("loading {} / {}", images.display(), labels.display()))?;
                let ds = data::partition_dirichlet(
                    &train,
                    self.num_clients.unwrap(),
                    self.dirichlet_alpha.unwrap(),
                    self.min_shard.unwrap_or(1),
                    self.seed,
                )?;
                match (&self.test_images, &self.test_labels) {
                    (Some(ti), Some(tl)) => {
                        let test = data::load_idx(ti, tl)
                            .with_context(|| format!("loading {} / {}", ti.display(), tl.display()))?;
                        ds.with_test_set(test)?
                    }
                    _ => ds,
                }
            }
            DatasetSource::Cached => {
                let path = self.path.as_ref().unwrap();
                data::load_dataset(path)
                    .with_context(|| format!("loading cached dataset {}", path.display()))?
                    .0
            }
        })
    }

    /// Rewrite relative paths as `base.join(path)`.
    pub fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.train_images,
            &mut self.train_labels,
            &mut self.test_images,
            &mut self.test_labels,
            &mut self.path,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.dataset.validate()?;
        self.validate_model()?;
        self.validate_train()?;
        self.validate_select()?;
        self.validate_output()
    }

    fn validate_model(&self) -> Result<(), ConfigError> {
        match self.model.kind {
            ModelKind::Logistic if !self.model.hidden.is_empty() => {
                Err(invalid("model.hidden", "logistic regression has no hidden layers"))
            }
            ModelKind::Mlp if self.model.hidden.len() != 2 || self.model.hidden.contains(&0) => {
                Err(invalid("model.hidden", "mlp needs two positive hidden widths, e.g. [200, 200]"))
            }
            _ => Ok(()),
        }
    }

    fn validate_train(&self) -> Result<(), ConfigError> {
        let t = &self.train;
        if t.tau == 0 {
            return Err(invalid("train.tau", "must be at least 1"));
        }
        if t.batch_size == BatchSize::Fixed(0) {
            return Err(invalid("train.batch_size", "must be at least 1"));
        }
        if !(t.eta0 >= 0.0 && t.eta0.is_finite()) {
            return Err(invalid("train.eta0", "must be a finite non-negative number"));
        }
        if t.rounds == 0 {
            return Err(invalid("train.rounds", "must be at least 1"));
        }
        match (t.m, t.fraction) {
            (Some(_), Some(_)) => return Err(invalid("train.fraction", "give either m or fraction, not both")),
            (None, None) => return Err(invalid("train.m", "missing (set train.m or train.fraction)")),
            (None, Some(c)) if !(c > 0.0 && c <= 1.0) => {
                return Err(invalid("train.fraction", "must lie in (0, 1]"))
            }
            _ => {}
        }
        if let Some(k) = self.dataset.known_num_clients() {
            for m in self.m_values() {
                if m == 0 || m > k {
                    let path = if self.output.m_values.is_empty() { "train.m" } else { "output.m_values" };
                    return Err(invalid(path, format!("need 1 <= m <= K = {k}, got {m}")));
                }
            }
        }
        Ok(())
    }

    fn validate_select(&self) -> Result<(), ConfigError> {
        let s = &self.select;
        if s.strategies.is_empty() {
            return Err(invalid("select.strategies", "list at least one strategy"));
        }
        if !(0.0..=1.0).contains(&s.gamma) {
            return Err(invalid("select.gamma", format!("must lie in [0, 1], got {}", s.gamma)));
        }
        if s.strategies.iter().any(|k| k.needs_d()) {
            let path = if s.d.is_some() { "select.d" } else { "select.d_per_m" };
            let k = self.dataset.known_num_clients();
            for m in self.m_values() {
                let d = self.d_for(m);
                if d < m || k.is_some_and(|k| d > k) {
                    let bound = k.map_or("K".to_string(), |k| k.to_string());
                    return Err(invalid(path, format!("pow-d and rpow-d need m <= d <= {bound}, got d = {d} for m = {m}")));
                }
            }
        }
        Ok(())
    }

    fn validate_output(&self) -> Result<(), ConfigError> {
        let o = &self.output;
        if o.eval_every == 0 {
            return Err(invalid("output.eval_every", "must be at least 1"));
        }
        if o.histogram_bins == 0 {
            return Err(invalid("output.histogram_bins", "must be at least 1"));
        }
        if o.seeds.is_empty() {
            return Err(invalid("output.seeds", "list at least one seed"));
        }
        Ok(())
    }

    /// The `m` values a sweep covers. With `train.fraction` and an unknown
    /// client count this is resolved later by [`Self::resolve_m`].
    pub fn m_values(&self) -> Vec<usize> {
        if !self.output.m_values.is_empty() {
            return self.output.m_values.clone();
        }
        match (self.train.m, self.train.fraction, self.dataset.known_num_clients()) {
            (Some(m), _, _) => vec![m],
            (None, Some(c), Some(k)) => vec![clients_from_fraction(c, k)],
            _ => Vec::new(),
        }
    }

    /// `m` values once the client count `k` is known.
    pub fn resolve_m(&self, k: usize) -> Vec<usize> {
        if !self.output.m_values.is_empty() {
            return self.output.m_values.clone();
        }
        match (self.train.m, self.train.fraction) {
            (Some(m), _) => vec![m],
            (None, Some(c)) => vec![clients_from_fraction(c, k)],
            (None, None) => Vec::new(),
        }
    }

    pub fn d_for(&self, m: usize) -> usize {
        self.select.d.unwrap_or(self.select.d_per_m * m)
    }

    pub fn strategy_spec(&self, kind: StrategyKind, m: usize) -> StrategySpec {
        StrategySpec {
            kind,
            d: if kind.needs_d() { self.d_for(m) } else { 0 },
            gamma: self.select.gamma,
            cold_start: self.select.cold_start,
        }
    }

    pub fn train_config(&self, m: usize, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            tau: t.tau,
            batch_size: t.batch_size,
            eta0: t.eta0,
            lr_milestones: t.lr_milestones.clone(),
            rounds: t.rounds,
            m,
            seed,
            eval_every: self.output.eval_every,
            parallelism: t.parallelism,
            record_wall_time: self.output.record_wall_time,
        }
    }

    pub fn model_spec(&self, ds: &FederatedDataset) -> ModelSpec {
        ModelSpec {
            kind: self.model.kind,
            input_dim: ds.feature_dim(),
            num_classes: ds.num_classes(),
            hidden: self.model.hidden.clone(),
        }
    }
}
