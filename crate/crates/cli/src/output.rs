//! Per-run output files.
//!
//! A run directory holds:
//!
//! | file               | contents                                             |
//! |--------------------|------------------------------------------------------|
//! | `manifest.json`    | resolved config, seeds, paths; written before training |
//! | `metrics.csv`      | one row per round ([`METRICS_HEADER`])               |
//! | `fairness.csv`     | final-round Jain index and loss spread               |
//! | `client_losses.csv`| final `F_k` per client                               |
//! | `histogram.csv`    | histogram of the final per-client losses             |
//! | `bandit.csv`       | ucb-cs statistics per round (optional)               |
//! | `checkpoint.bin`   | latest checkpoint (optional)                         |
//!
//! A run that aborts leaves its metrics file in place with a trailing
//! `# aborted ...` comment line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fedsel_core::engine::RoundRecord;
use fedsel_core::metrics::{FairnessReport, Histogram};
use fedsel_core::selection::{BanditRow, StrategyKind};
use serde::{Deserialize, Serialize};

pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FAIRNESS_FILE: &str = "fairness.csv";
pub const CLIENT_LOSSES_FILE: &str = "client_losses.csv";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const BANDIT_FILE: &str = "bandit.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const ABORT_MARKER: &str = "# aborted";

pub const METRICS_HEADER: [&str; 12] = [
    "round",
    "strategy",
    "seed",
    "eta",
    "global_train_loss",
    "test_accuracy",
    "jain",
    "sigma_t",
    "selected_ids",
    "model_msgs",
    "extra_msgs",
    "wall_ms",
];

/// One row of `metrics.csv`. Optional columns are empty on rounds where
/// they were not evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    pub strategy: StrategyKind,
    pub seed: u64,
    pub eta: f64,
    pub global_train_loss: f64,
    pub test_accuracy: Option<f64>,
    pub jain: Option<f64>,
    pub sigma_t: f64,
    /// Semicolon-joined client ids.
    pub selected_ids: String,
    pub model_msgs: usize,
    pub extra_msgs: usize,
    pub wall_ms: Option<f64>,
}

impl MetricsRow {
    pub fn new(rec: &RoundRecord, strategy: StrategyKind, seed: u64) -> Self {
        MetricsRow {
            round: rec.round,
            strategy,
            seed,
            eta: rec.eta,
            global_train_loss: rec.global_train_loss,
            test_accuracy: rec.test_accuracy,
            jain: rec.jain,
            sigma_t: rec.sigma_t,
            selected_ids: rec
                .selected
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            model_msgs: rec.comm.model_messages,
            extra_msgs: rec.comm.extra_eval_messages,
            wall_ms: rec.wall_ms,
        }
    }

    pub fn selected(&self) -> Vec<usize> {
        self.selected_ids
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().expect("selected_ids holds integers"))
            .collect()
    }
}

/// Appends rows to `metrics.csv`, flushing after every round so a crash
/// leaves a readable prefix.
pub struct MetricsWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> anyhow::Result<Self> {
        let mut inner = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(BufWriter::new(File::create(path)?));
        inner.write_record(METRICS_HEADER)?;
        inner.flush()?;
        Ok(MetricsWriter { inner })
    }

    /// Keep the header and rows with `round <= keep_through`; continue
    /// appending after them.
    pub fn truncate_to(path: &Path, keep_through: usize) -> anyhow::Result<Self> {
        let rows = read_metrics(path)?;
        let mut w = Self::create(path)?;
        for row in rows.into_iter().filter(|r| r.round <= keep_through) {
            w.write(&row)?;
        }
        Ok(w)
    }

    pub fn write(&mut self, row: &MetricsRow) -> anyhow::Result<()> {
        self.inner.serialize(row)?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn abort(self, reason: &str) -> anyhow::Result<()> {
        let mut file = self.inner.into_inner().map_err(|e| e.into_error())?;
        writeln!(file, "{ABORT_MARKER}: {}", reason.replace('\n', " "))?;
        file.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> anyhow::Result<Vec<MetricsRow>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    anyhow::ensure!(
        header == METRICS_HEADER,
        "{}: unexpected columns {header:?}",
        path.display()
    );
    Ok(reader.deserialize().collect::<Result<_, _>>()?)
}

pub fn was_aborted(path: &Path) -> anyhow::Result<bool> {
    let text = std::fs::read_to_string(path)?;
    Ok(text.lines().any(|l| l.starts_with(ABORT_MARKER)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FairnessRow {
    pub round: usize,
    pub strategy: StrategyKind,
    pub seed: u64,
    pub m: usize,
    pub jain: f64,
    pub min_loss: f64,
    pub mean_loss: f64,
    pub max_loss: f64,
}

pub fn write_fairness(
    path: &Path,
    report: &FairnessReport,
    strategy: StrategyKind,
    seed: u64,
    m: usize,
) -> anyhow::Result<()> {
    let l = &report.losses;
    let row = FairnessRow {
        round: report.round,
        strategy,
        seed,
        m,
        jain: report.jain,
        min_loss: l.iter().copied().fold(f64::INFINITY, f64::min),
        mean_loss: l.iter().sum::<f64>() / l.len() as f64,
        max_loss: l.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    let mut w = csv::Writer::from_path(path)?;
    w.serialize(row)?;
    w.flush()?;
    Ok(())
}

pub fn write_client_losses(path: &Path, fractions: &[f64], losses: &[f64]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["client_id", "fraction", "final_loss"])?;
    for (k, (p, f)) in fractions.iter().zip(losses).enumerate() {
        w.write_record([k.to_string(), p.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HistogramRow {
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

pub fn write_histogram(path: &Path, h: &Histogram) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (bin, &count) in h.counts.iter().enumerate() {
        w.serialize(HistogramRow {
            bin,
            lower: h.edges[bin],
            upper: h.edges[bin + 1],
            count,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_histogram(path: &Path) -> anyhow::Result<Vec<HistogramRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub struct BanditWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl BanditWriter {
    /// Start a fresh file, or with `keep_through = Some(r)` keep the existing
    /// rows up to round `r` and append after them.
    pub fn create(path: &Path, keep_through: Option<usize>) -> anyhow::Result<Self> {
        let kept: Vec<String> = match keep_through {
            Some(r) if path.is_file() => std::fs::read_to_string(path)?
                .lines()
                .skip(1)
                .filter(|l| l.split(',').next().and_then(|x| x.parse::<usize>().ok()).is_some_and(|x| x <= r))
                .map(str::to_string)
                .collect(),
            _ => Vec::new(),
        };
        let mut file = BufWriter::new(File::create(path)?);
        writeln!(file, "round,client,loss_sum,count,discounted_time,sigma,index")?;
        for line in kept {
            writeln!(file, "{line}")?;
        }
        let inner = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        Ok(BanditWriter { inner })
    }

    pub fn write(&mut self, rows: &[BanditRow]) -> anyhow::Result<()> {
        for r in rows {
            self.inner.write_record([
                r.round.to_string(),
                r.client.to_string(),
                r.loss_sum.to_string(),
                r.count.to_string(),
                r.discounted_time.to_string(),
                r.sigma.to_string(),
                r.index.to_string(),
            ])?;
        }
        self.inner.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Running,
    Completed,
    Aborted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunPaths {
    pub metrics: PathBuf,
    pub fairness: PathBuf,
    pub client_losses: PathBuf,
    pub histogram: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandit: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub strategy: StrategyKind,
    pub m: usize,
    pub d: usize,
    pub seed: u64,
    pub dataset_seed: u64,
    pub rounds: usize,
    pub status: RunStatus,
    /// Seconds since the Unix epoch when the run started.
    pub started_at: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub paths: RunPaths,
    /// The resolved config in TOML form.
    pub config: String,
}

impl RunManifest {
    pub fn save(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }
}
