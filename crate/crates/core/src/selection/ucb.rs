//! Discounted-UCB client selection (`ucb-cs`).
//!
//! Each client is an arm. After every round all statistics are discounted by
//! `gamma` and the reporting clients add their observed mean local loss:
//!
//! ```text
//! L_k <- gamma * L_k + [k reported] * loss_k
//! N_k <- gamma * N_k + [k reported]
//! T   <- gamma * T   + 1
//! ```
//!
//! The index is `A_k = p_k * (L_k / N_k + sqrt(2 sigma^2 ln T / N_k))`, where
//! `sigma` is the largest per-client standard deviation of step losses in the
//! most recent reports. The `m` clients with the largest index are selected.
//! Discounting happens once per communication round, not once per local
//! iteration.

use serde::{Deserialize, Serialize};

use super::{sample_proportional, top_m_random_ties, Selection, SelectionContext, SelectionStrategy, StrategyKind};
use crate::engine::ClientReport;
use crate::rng::StreamRng;
use crate::{Error, Result};

/// How clients that have never reported are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ColdStart {
    /// Unvisited clients have index `+inf`, so the first rounds sweep every
    /// client once in random order.
    #[default]
    ForceExplore,
    /// The first round is drawn like `rand`; unvisited clients have index 0
    /// afterwards.
    RandomFirstRound,
}

/// Sample standard deviation (denominator `n - 1`); zero for fewer than two
/// values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    var.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    pub gamma: f64,
    /// Discounted loss sums `L_k`.
    pub loss_sum: Vec<f64>,
    /// Discounted selection counts `N_k`.
    pub count: Vec<f64>,
    pub ever_selected: Vec<bool>,
    /// Most recent reported loss; the exploitation term once `N_k` has
    /// decayed to exactly zero (always the case for `gamma = 0`).
    pub last_loss: Vec<f64>,
    /// Discounted time `T = sum_{r'} gamma^(r - r')`.
    pub discounted_time: f64,
    pub sigma: f64,
    /// Rounds folded in so far.
    pub round: usize,
}

impl BanditState {
    pub fn new(num_clients: usize, gamma: f64) -> Self {
        BanditState {
            gamma,
            loss_sum: vec![0.0; num_clients],
            count: vec![0.0; num_clients],
            ever_selected: vec![false; num_clients],
            last_loss: vec![0.0; num_clients],
            discounted_time: 0.0,
            sigma: 0.0,
            round: 0,
        }
    }

    pub fn num_clients(&self) -> usize {
        self.loss_sum.len()
    }

    /// Fold in one finished round. Every client's statistics are discounted,
    /// then each reporting client adds its mean loss and one count.
    pub fn update(&mut self, reports: &[ClientReport]) -> Result<()> {
        let k_total = self.num_clients();
        if let Some(bad) = reports.iter().find(|r| r.client_id >= k_total) {
            return Err(Error::UnknownClient {
                client: bad.client_id,
                num_clients: k_total,
            });
        }
        let g = self.gamma;
        for (l, n) in self.loss_sum.iter_mut().zip(self.count.iter_mut()) {
            *l *= g;
            *n *= g;
        }
        for r in reports {
            let k = r.client_id;
            self.loss_sum[k] += r.mean_loss;
            self.count[k] += 1.0;
            self.ever_selected[k] = true;
            self.last_loss[k] = r.mean_loss;
        }
        self.discounted_time = g * self.discounted_time + 1.0;
        if !reports.is_empty() {
            self.sigma = reports
                .iter()
                .map(|r| sample_std(&r.step_losses))
                .fold(0.0, f64::max);
        }
        self.round += 1;
        Ok(())
    }

    /// Discounted mean loss `L_k / N_k`.
    pub fn exploitation(&self, k: usize) -> f64 {
        if self.count[k] > 0.0 {
            self.loss_sum[k] / self.count[k]
        } else {
            self.last_loss[k]
        }
    }

    /// `sqrt(2 sigma^2 ln T / N_k)`, with `ln T` clamped at 0.
    pub fn exploration(&self, k: usize) -> f64 {
        let log_t = self.discounted_time.max(1.0).ln();
        if log_t == 0.0 || self.sigma == 0.0 {
            0.0
        } else if self.count[k] == 0.0 {
            f64::INFINITY
        } else {
            (2.0 * self.sigma * self.sigma * log_t / self.count[k]).sqrt()
        }
    }

    /// The UCB index `p_k * (L_k / N_k + U_k)`; `+inf` for never-selected
    /// clients.
    pub fn index(&self, k: usize, p_k: f64) -> f64 {
        if !self.ever_selected[k] {
            return f64::INFINITY;
        }
        p_k * (self.exploitation(k) + self.exploration(k))
    }
}

/// One client's bandit statistics at the end of a round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BanditRow {
    pub round: usize,
    pub client: usize,
    pub loss_sum: f64,
    pub count: f64,
    pub discounted_time: f64,
    pub sigma: f64,
    pub index: f64,
}

#[derive(Debug, Clone)]
pub struct UcbCs {
    state: BanditState,
    cold_start: ColdStart,
}

impl UcbCs {
    pub fn new(num_clients: usize, gamma: f64, cold_start: ColdStart) -> Self {
        UcbCs {
            state: BanditState::new(num_clients, gamma),
            cold_start,
        }
    }

    pub fn from_state(state: BanditState, cold_start: ColdStart) -> Self {
        UcbCs { state, cold_start }
    }

    pub fn state(&self) -> &BanditState {
        &self.state
    }

    fn index(&self, k: usize, p_k: f64) -> f64 {
        match self.cold_start {
            ColdStart::RandomFirstRound if !self.state.ever_selected[k] => 0.0,
            _ => self.state.index(k, p_k),
        }
    }

    pub fn indices(&self, fractions: &[f64]) -> Vec<f64> {
        fractions.iter().enumerate().map(|(k, &p)| self.index(k, p)).collect()
    }
}

impl SelectionStrategy for UcbCs {
    fn kind(&self) -> StrategyKind {
        StrategyKind::UcbCs
    }

    fn select(&mut self, ctx: &SelectionContext<'_>, rng: &mut StreamRng) -> Result<Selection> {
        if ctx.fractions.len() != self.state.num_clients() {
            return Err(Error::Dimension {
                expected: self.state.num_clients(),
                got: ctx.fractions.len(),
            });
        }
        let clients = if self.cold_start == ColdStart::RandomFirstRound && self.state.round == 0 {
            let mut s = sample_proportional(ctx.fractions, ctx.m, rng);
            s.sort_unstable();
            s
        } else {
            let keyed: Vec<(usize, f64)> = self.indices(ctx.fractions).into_iter().enumerate().collect();
            top_m_random_ties(&keyed, ctx.m, rng)
        };
        Ok(Selection {
            clients,
            extra_messages: 0,
        })
    }

    fn observe(&mut self, _round: usize, reports: &[ClientReport]) -> Result<()> {
        self.state.update(reports)
    }

    fn save_state(&self) -> serde_json::Value {
        serde_json::to_value(&self.state).expect("bandit state serialises")
    }

    fn load_state(&mut self, state: serde_json::Value) -> Result<()> {
        self.state = serde_json::from_value(state)?;
        Ok(())
    }

    fn bandit_rows(&self, fractions: &[f64]) -> Option<Vec<BanditRow>> {
        let s = &self.state;
        Some(
            (0..s.num_clients())
                .map(|k| BanditRow {
                    round: s.round,
                    client: k,
                    loss_sum: s.loss_sum[k],
                    count: s.count[k],
                    discounted_time: s.discounted_time,
                    sigma: s.sigma,
                    index: self.index(k, fractions[k]),
                })
                .collect(),
        )
    }
}
