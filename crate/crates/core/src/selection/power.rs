//! Power-of-choice selection: exact (`pow-d`) and stale-loss (`rpow-d`).

use serde::{Deserialize, Serialize};

use super::{sample_proportional, top_m_random_ties, Selection, SelectionContext, SelectionStrategy, StrategyKind};
use crate::engine::ClientReport;
use crate::rng::StreamRng;
use crate::{Error, Result};

/// Polls `d` candidates (drawn proportionally to `p_k`) for their exact
/// local loss at the current global model and keeps the `m` largest.
#[derive(Debug, Clone)]
pub struct PowerOfChoice {
    d: usize,
}

impl PowerOfChoice {
    pub fn new(d: usize) -> Self {
        PowerOfChoice { d }
    }
}

impl SelectionStrategy for PowerOfChoice {
    fn kind(&self) -> StrategyKind {
        StrategyKind::PowD
    }

    fn select(&mut self, ctx: &SelectionContext<'_>, rng: &mut StreamRng) -> Result<Selection> {
        if self.d < ctx.m || self.d > ctx.num_clients {
            return Err(Error::config(format!("pow-d needs m <= d <= K, got d = {}", self.d)));
        }
        let candidates = sample_proportional(ctx.fractions, self.d, rng);
        let losses = ctx.oracle.full_losses(&candidates, ctx.global_params)?;
        let keyed: Vec<(usize, f64)> = candidates.into_iter().zip(losses).collect();
        Ok(Selection {
            clients: top_m_random_ties(&keyed, ctx.m, rng),
            extra_messages: self.d,
        })
    }

    fn observe(&mut self, _round: usize, _reports: &[ClientReport]) -> Result<()> {
        Ok(())
    }
}

/// Loss each client reported the last time it was selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaleLossTable {
    /// `(loss, round)` of the latest report, `None` if never selected.
    pub entries: Vec<Option<(f64, usize)>>,
}

impl StaleLossTable {
    pub fn new(num_clients: usize) -> Self {
        StaleLossTable {
            entries: vec![None; num_clients],
        }
    }

    pub fn record(&mut self, client: usize, loss: f64, round: usize) -> Result<()> {
        let n = self.entries.len();
        let slot = self
            .entries
            .get_mut(client)
            .ok_or(Error::UnknownClient { client, num_clients: n })?;
        *slot = Some((loss, round));
        Ok(())
    }

    /// Ranking key: the stale loss, or `+inf` for never-selected clients.
    pub fn key(&self, client: usize) -> f64 {
        self.entries[client].map_or(f64::INFINITY, |(loss, _)| loss)
    }
}

/// Like [`PowerOfChoice`] but ranks candidates by their stale reported loss,
/// so no polling is needed.
#[derive(Debug, Clone)]
pub struct StalePowerOfChoice {
    d: usize,
    table: StaleLossTable,
}

impl StalePowerOfChoice {
    pub fn new(num_clients: usize, d: usize) -> Self {
        StalePowerOfChoice {
            d,
            table: StaleLossTable::new(num_clients),
        }
    }

    pub fn with_table(table: StaleLossTable, d: usize) -> Self {
        StalePowerOfChoice { d, table }
    }

    pub fn table(&self) -> &StaleLossTable {
        &self.table
    }
}

impl SelectionStrategy for StalePowerOfChoice {
    fn kind(&self) -> StrategyKind {
        StrategyKind::RpowD
    }

    fn select(&mut self, ctx: &SelectionContext<'_>, rng: &mut StreamRng) -> Result<Selection> {
        if self.d < ctx.m || self.d > ctx.num_clients {
            return Err(Error::config(format!("rpow-d needs m <= d <= K, got d = {}", self.d)));
        }
        let candidates = sample_proportional(ctx.fractions, self.d, rng);
        let keyed: Vec<(usize, f64)> = candidates.into_iter().map(|k| (k, self.table.key(k))).collect();
        Ok(Selection {
            clients: top_m_random_ties(&keyed, ctx.m, rng),
            extra_messages: 0,
        })
    }

    fn observe(&mut self, round: usize, reports: &[ClientReport]) -> Result<()> {
        for r in reports {
            self.table.record(r.client_id, r.mean_loss, round)?;
        }
        Ok(())
    }

    fn save_state(&self) -> serde_json::Value {
        serde_json::to_value(&self.table).expect("table serialises")
    }

    fn load_state(&mut self, state: serde_json::Value) -> Result<()> {
        self.table = serde_json::from_value(state)?;
        Ok(())
    }
}
