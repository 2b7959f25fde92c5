//! Client-selection strategies.
//!
//! A strategy is asked once per communication round for the active set of
//! `m` clients and is then shown the reports of the clients it picked. The
//! four policies differ in what they rank clients by:
//!
//! | strategy | ranks by | extra messages per round |
//! |----------|----------|--------------------------|
//! | `rand`   | nothing; samples proportionally to `p_k` | 0 |
//! | `pow-d`  | exact current loss of `d` polled candidates | `d` |
//! | `rpow-d` | loss reported when the candidate was last selected | 0 |
//! | `ucb-cs` | discounted UCB index over reported losses | 0 |

mod power;
mod random;
mod ucb;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use power::{PowerOfChoice, StaleLossTable, StalePowerOfChoice};
pub use random::{sample_proportional, RandomSelection};
pub use ucb::{sample_std, BanditRow, BanditState, ColdStart, UcbCs};

use crate::engine::ClientReport;
use crate::model::ParamVector;
use crate::rng::StreamRng;
use crate::{Error, Result};

/// Server-side access to exact client losses. Every call polls the listed
/// clients, which costs one message each.
pub trait LossOracle: Sync {
    /// `F_k(w)` on each listed client's full local training set.
    fn full_losses(&self, clients: &[usize], w: &ParamVector) -> Result<Vec<f64>>;
}

/// Read-only view of the server state at selection time.
pub struct SelectionContext<'a> {
    /// 1-based communication round about to start.
    pub round: usize,
    pub num_clients: usize,
    pub m: usize,
    pub fractions: &'a [f64],
    pub global_params: &'a ParamVector,
    pub oracle: &'a dyn LossOracle,
}

/// The chosen active set (ascending ids) and the polling cost paid to get it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub clients: Vec<usize>,
    pub extra_messages: usize,
}

pub trait SelectionStrategy: Send {
    fn kind(&self) -> StrategyKind;

    fn select(&mut self, ctx: &SelectionContext<'_>, rng: &mut StreamRng) -> Result<Selection>;

    /// Reports from the round that just finished, in ascending client order.
    fn observe(&mut self, round: usize, reports: &[ClientReport]) -> Result<()>;

    /// Internal state for checkpoints.
    fn save_state(&self) -> serde_json::Value {
        serde_json::Value::Null
    }

    fn load_state(&mut self, _state: serde_json::Value) -> Result<()> {
        Ok(())
    }

    /// Per-client bandit statistics for debug dumps; `None` for strategies
    /// without bandit state.
    fn bandit_rows(&self, _fractions: &[f64]) -> Option<Vec<BanditRow>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Rand,
    PowD,
    RpowD,
    UcbCs,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Rand,
        StrategyKind::PowD,
        StrategyKind::RpowD,
        StrategyKind::UcbCs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Rand => "rand",
            StrategyKind::PowD => "pow-d",
            StrategyKind::RpowD => "rpow-d",
            StrategyKind::UcbCs => "ucb-cs",
        }
    }

    pub fn needs_d(self) -> bool {
        matches!(self, StrategyKind::PowD | StrategyKind::RpowD)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown strategy `{s}` (expected rand | pow-d | rpow-d | ucb-cs)")))
    }
}

/// Everything needed to construct a strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    /// Candidate pool size for `pow-d` / `rpow-d`.
    pub d: usize,
    /// Discount factor for `ucb-cs`.
    pub gamma: f64,
    pub cold_start: ColdStart,
}

impl StrategySpec {
    pub fn new(kind: StrategyKind) -> Self {
        StrategySpec {
            kind,
            d: 0,
            gamma: 0.7,
            cold_start: ColdStart::default(),
        }
    }

    pub fn validate(&self, num_clients: usize, m: usize) -> Result<()> {
        if m == 0 || m > num_clients {
            return Err(Error::config(format!("need 1 <= m <= K, got m = {m}, K = {num_clients}")));
        }
        if self.kind.needs_d() && !(m <= self.d && self.d <= num_clients) {
            return Err(Error::config(format!(
                "{} needs m <= d <= K, got d = {}, m = {m}, K = {num_clients}",
                self.kind, self.d
            )));
        }
        if self.kind == StrategyKind::UcbCs && !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn build(&self, num_clients: usize, m: usize) -> Result<Box<dyn SelectionStrategy>> {
        self.validate(num_clients, m)?;
        Ok(match self.kind {
            StrategyKind::Rand => Box::new(RandomSelection),
            StrategyKind::PowD => Box::new(PowerOfChoice::new(self.d)),
            StrategyKind::RpowD => Box::new(StalePowerOfChoice::new(num_clients, self.d)),
            StrategyKind::UcbCs => Box::new(UcbCs::new(num_clients, self.gamma, self.cold_start)),
        })
    }
}

/// The `m` entries with the largest keys, ties broken uniformly at random.
/// Returned ids are sorted ascending.
pub fn top_m_random_ties<R: Rng>(keyed: &[(usize, f64)], m: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<(usize, f64)> = keyed.to_vec();
    order.shuffle(rng);
    // Stable sort keeps the shuffled order inside each tie group.
    order.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut picked: Vec<usize> = order.into_iter().take(m).map(|(k, _)| k).collect();
    picked.sort_unstable();
    picked
}

/// Messages exchanged in one round: a broadcast and an upload per selected
/// client, plus any loss polls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundComm {
    pub model_messages: usize,
    pub extra_eval_messages: usize,
}

impl RoundComm {
    pub fn total(&self) -> usize {
        self.model_messages + self.extra_eval_messages
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommLedger {
    pub rounds: Vec<RoundComm>,
}

impl CommLedger {
    pub fn record(&mut self, m: usize, extra_eval_messages: usize) -> RoundComm {
        let entry = RoundComm {
            model_messages: 2 * m,
            extra_eval_messages,
        };
        self.rounds.push(entry);
        entry
    }

    /// Total messages per round, in round order.
    pub fn per_round_totals(&self) -> Vec<usize> {
        self.rounds.iter().map(RoundComm::total).collect()
    }

    pub fn mean_per_round(&self) -> f64 {
        if self.rounds.is_empty() {
            return 0.0;
        }
        self.per_round_totals().iter().sum::<usize>() as f64 / self.rounds.len() as f64
    }
}

/// Messages per round a strategy costs by construction: `2m`, plus `d` polls
/// for `pow-d`.
pub fn comm_cost(kind: StrategyKind, m: usize, d: usize) -> usize {
    match kind {
        StrategyKind::PowD => 2 * m + d,
        _ => 2 * m,
    }
}
