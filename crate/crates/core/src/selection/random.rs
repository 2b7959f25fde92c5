use rand::Rng;

use super::{Selection, SelectionContext, SelectionStrategy, StrategyKind};
use crate::engine::ClientReport;
use crate::rng::StreamRng;
use crate::Result;

/// Draw `m` distinct indices by sequential weighted sampling without
/// replacement: pick one proportionally to `weights`, remove it, renormalise,
/// repeat. Once only zero-weight indices remain they are drawn uniformly.
/// The result is in draw order.
pub fn sample_proportional<R: Rng>(weights: &[f64], m: usize, rng: &mut R) -> Vec<usize> {
    let m = m.min(weights.len());
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut picked = Vec::with_capacity(m);
    for _ in 0..m {
        let total: f64 = remaining.iter().map(|&i| weights[i]).sum();
        let pos = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (pos, &i) in remaining.iter().enumerate() {
                acc += weights[i];
                if target < acc {
                    chosen = Some(pos);
                    break;
                }
            }
            // Rounding can leave target >= acc; fall back to the last
            // positive-weight entry.
            chosen.unwrap_or_else(|| {
                remaining
                    .iter()
                    .rposition(|&i| weights[i] > 0.0)
                    .expect("total > 0")
            })
        } else {
            rng.random_range(0..remaining.len())
        };
        picked.push(remaining.remove(pos));
    }
    picked
}

/// Unbiased baseline: `m` clients sampled proportionally to `p_k`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomSelection;

impl SelectionStrategy for RandomSelection {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Rand
    }

    fn select(&mut self, ctx: &SelectionContext<'_>, rng: &mut StreamRng) -> Result<Selection> {
        let mut clients = sample_proportional(ctx.fractions, ctx.m, rng);
        clients.sort_unstable();
        Ok(Selection {
            clients,
            extra_messages: 0,
        })
    }

    fn observe(&mut self, _round: usize, _reports: &[ClientReport]) -> Result<()> {
        Ok(())
    }
}
