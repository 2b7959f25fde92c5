//! Aggregating finished runs into one table per (strategy, m).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use fedsel_core::selection::StrategyKind;
use serde::Serialize;

use crate::output::{read_metrics, was_aborted, RunManifest, METRICS_FILE};

pub const NOT_REACHED: &str = "not reached";

/// Per-run numbers pulled from `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub strategy: StrategyKind,
    pub m: usize,
    pub seed: u64,
    pub rounds: usize,
    pub final_loss: f64,
    pub final_jain: Option<f64>,
    pub final_accuracy: Option<f64>,
    /// First round whose global loss is at or below the threshold.
    pub rounds_to_threshold: Option<usize>,
    pub mean_messages: f64,
}

pub fn summarize_run(dir: &Path, threshold: Option<f64>) -> anyhow::Result<RunSummary> {
    let manifest = RunManifest::load(dir).with_context(|| format!("reading manifest in {}", dir.display()))?;
    let metrics_path = dir.join(METRICS_FILE);
    anyhow::ensure!(
        !was_aborted(&metrics_path)?,
        "{} is an aborted run",
        dir.display()
    );
    let rows = read_metrics(&metrics_path)?;
    let last = rows
        .last()
        .with_context(|| format!("{} has no rounds", metrics_path.display()))?;
    let msgs: usize = rows.iter().map(|r| r.model_msgs + r.extra_msgs).sum();
    Ok(RunSummary {
        dir: dir.to_path_buf(),
        strategy: manifest.strategy,
        m: manifest.m,
        seed: manifest.seed,
        rounds: rows.len(),
        final_loss: last.global_train_loss,
        final_jain: last.jain,
        final_accuracy: last.test_accuracy,
        rounds_to_threshold: threshold
            .and_then(|t| rows.iter().find(|r| r.global_train_loss <= t).map(|r| r.round)),
        mean_messages: msgs as f64 / rows.len() as f64,
    })
}

/// Run directories under `paths`: each path is either a run directory or a
/// directory whose immediate children are. Sorted, duplicates removed.
pub fn discover_runs(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for p in paths {
        if p.join(METRICS_FILE).is_file() {
            dirs.push(p.clone());
            continue;
        }
        let entries = std::fs::read_dir(p).with_context(|| format!("listing {}", p.display()))?;
        for entry in entries {
            let child = entry?.path();
            if child.join(METRICS_FILE).is_file() {
                dirs.push(child);
            }
        }
    }
    dirs.sort();
    dirs.dedup();
    anyhow::ensure!(!dirs.is_empty(), "no run directories found");
    Ok(dirs)
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub strategy: StrategyKind,
    pub m: usize,
    pub runs: usize,
    pub mean_final_loss: f64,
    pub mean_final_jain: Option<f64>,
    pub mean_final_accuracy: Option<f64>,
    /// Mean over runs, or [`NOT_REACHED`] when any run missed the
    /// threshold. Empty without a threshold.
    pub rounds_to_threshold: String,
    pub mean_msgs_per_round: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

fn mean_opt(xs: &[Option<f64>]) -> Option<f64> {
    xs.iter()
        .copied()
        .collect::<Option<Vec<f64>>>()
        .map(|v| mean(v.into_iter()))
}

pub fn aggregate(runs: &[RunSummary], threshold: Option<f64>) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(StrategyKind, usize), Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        groups.entry((r.strategy, r.m)).or_default().push(r);
    }
    // Rows ordered by m, then strategy.
    let mut rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((strategy, m), g)| {
            let rtt = match threshold {
                None => String::new(),
                Some(_) => g
                    .iter()
                    .map(|r| r.rounds_to_threshold)
                    .collect::<Option<Vec<usize>>>()
                    .map_or(NOT_REACHED.to_string(), |v| {
                        mean(v.into_iter().map(|x| x as f64)).to_string()
                    }),
            };
            SummaryRow {
                strategy,
                m,
                runs: g.len(),
                mean_final_loss: mean(g.iter().map(|r| r.final_loss)),
                mean_final_jain: mean_opt(&g.iter().map(|r| r.final_jain).collect::<Vec<_>>()),
                mean_final_accuracy: mean_opt(&g.iter().map(|r| r.final_accuracy).collect::<Vec<_>>()),
                rounds_to_threshold: rtt,
                mean_msgs_per_round: mean(g.iter().map(|r| r.mean_messages)),
            }
        })
        .collect();
    rows.sort_by_key(|r| (r.m, r.strategy));
    rows
}

pub fn write_csv(path: &Path, rows: &[SummaryRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width text rendering of the summary.
pub fn render_text(rows: &[SummaryRow]) -> String {
    let header = [
        "strategy",
        "m",
        "runs",
        "final_loss",
        "final_jain",
        "final_acc",
        "rounds_to_thr",
        "msgs/round",
    ];
    let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    let cells: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.strategy.to_string(),
                r.m.to_string(),
                r.runs.to_string(),
                format!("{:.4}", r.mean_final_loss),
                opt(r.mean_final_jain),
                opt(r.mean_final_accuracy),
                if r.rounds_to_threshold.is_empty() {
                    "-".to_string()
                } else {
                    r.rounds_to_threshold.clone()
                },
                format!("{:.2}", r.mean_msgs_per_round),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: &[&str]| {
        let parts: Vec<String> = row
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        writeln!(out, "{}", parts.join("  ").trim_end()).unwrap();
    };
    line(&mut out, &header);
    for row in &cells {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

/// Summarise `paths` and write `summary.csv` / `summary.txt` into
/// `out_dir`. Returns the text table.
pub fn summarize(paths: &[PathBuf], threshold: Option<f64>, out_dir: &Path) -> anyhow::Result<String> {
    let runs = discover_runs(paths)?
        .iter()
        .map(|d| summarize_run(d, threshold))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let rows = aggregate(&runs, threshold);
    std::fs::create_dir_all(out_dir)?;
    write_csv(&out_dir.join("summary.csv"), &rows)?;
    let text = render_text(&rows);
    std::fs::write(out_dir.join("summary.txt"), &text)?;
    Ok(text)
}
