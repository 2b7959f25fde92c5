//! Global objective, per-client losses and fairness.

use serde::{Deserialize, Serialize};

use crate::data::FederatedDataset;
use crate::model::{self, ModelSpec, ParamVector};
use crate::parallel::{self, Parallelism};
use crate::{Error, Result};

/// `F_k(w)`: mean loss over each client's full local training set.
pub fn client_losses(ds: &FederatedDataset, spec: &ModelSpec, w: &ParamVector, mode: Parallelism) -> Result<Vec<f64>> {
    parallel::map(ds.shards(), mode, |shard| model::loss(spec, w, &shard.samples))
        .into_iter()
        .collect()
}

/// `F(w) = sum_k p_k F_k(w)`.
pub fn global_loss(fractions: &[f64], losses: &[f64]) -> Result<f64> {
    if fractions.len() != losses.len() {
        return Err(Error::Dimension {
            expected: fractions.len(),
            got: losses.len(),
        });
    }
    Ok(fractions.iter().zip(losses).map(|(p, f)| p * f).sum())
}

/// Jain's index `(sum x)^2 / (K * sum x^2)`, in `[1/K, 1]` for non-negative
/// input. An all-zero vector counts as perfectly uniform (J = 1).
pub fn jain_index(losses: &[f64]) -> f64 {
    let k = losses.len();
    if k == 0 {
        return 1.0;
    }
    let sums = |scale: f64| {
        let sum: f64 = losses.iter().map(|x| x / scale).sum();
        let sum_sq: f64 = losses.iter().map(|x| (x / scale) * (x / scale)).sum();
        (sum, sum_sq)
    };
    let (mut sum, mut sum_sq) = sums(1.0);
    if !sum_sq.is_finite() {
        // The index is scale-free; rescale when the squares overflow.
        (sum, sum_sq) = sums(losses.iter().fold(0.0_f64, |a, x| a.max(x.abs())));
    }
    if sum_sq == 0.0 {
        return 1.0;
    }
    let j = sum * sum / (k as f64 * sum_sq);
    j.clamp(1.0 / k as f64, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub round: usize,
    pub jain: f64,
    pub losses: Vec<f64>,
}

impl FairnessReport {
    pub fn new(round: usize, losses: Vec<f64>) -> Self {
        FairnessReport {
            round,
            jain: jain_index(&losses),
            losses,
        }
    }
}

/// Equal-width histogram over `[min, max]`. The last bin is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Index of the most populated bin (lowest on ties).
    pub fn modal_bin(&self) -> usize {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        self.counts.iter().position(|&c| c == max).unwrap_or(0)
    }

    /// Centre of the modal bin.
    pub fn modal_value(&self) -> f64 {
        let b = self.modal_bin();
        0.5 * (self.edges[b] + self.edges[b + 1])
    }
}

pub fn loss_histogram(losses: &[f64], num_bins: usize) -> Result<Histogram> {
    if losses.is_empty() || num_bins == 0 {
        return Err(Error::config("histogram needs at least one value and one bin"));
    }
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(Histogram {
            edges: vec![min, max],
            counts: vec![losses.len()],
        });
    }
    let width = (max - min) / num_bins as f64;
    let edges: Vec<f64> = (0..=num_bins)
        .map(|i| if i == num_bins { max } else { min + width * i as f64 })
        .collect();
    let mut counts = vec![0; num_bins];
    for &x in losses {
        let bin = (((x - min) / width).floor() as usize).min(num_bins - 1);
        counts[bin] += 1;
    }
    Ok(Histogram { edges, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ClientShard, SampleSet};
    use crate::model::init_params;

    #[test]
    fn jain_examples() {
        assert_eq!(jain_index(&[1.0, 1.0, 1.0]), 1.0);
        assert_eq!(jain_index(&[1.0, 0.0]), 0.5);
        assert_eq!(jain_index(&[3.0, 1.0]), 0.8);
        assert_eq!(jain_index(&[0.0, 0.0]), 1.0);
    }

    #[test]
    fn global_loss_examples() {
        assert!((global_loss(&[0.1, 0.9], &[10.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((global_loss(&[0.2, 0.3, 0.5], &[4.0; 3]).unwrap() - 4.0).abs() < 1e-15);
        assert!(global_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn histogram_examples() {
        let h = loss_histogram(&[0.0, 1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(h.edges, vec![0.0, 1.5, 3.0]);
        assert_eq!(h.counts, vec![2, 2]);

        let h = loss_histogram(&[0.7; 5], 4).unwrap();
        assert_eq!(h.counts, vec![5]);
        assert_eq!(h.modal_value(), 0.7);
        assert!(loss_histogram(&[], 3).is_err());
    }

    #[test]
    fn zero_weights_give_ln10_everywhere() {
        let spec = ModelSpec::logistic(2, 10);
        let w = init_params(&spec, 0).unwrap();
        let shards = (0..3)
            .map(|k| {
                let mut s = SampleSet::new(2);
                for i in 0..=k {
                    s.push(&[i as f64, 1.0], (i * 3) % 10).unwrap();
                }
                ClientShard { client_id: k, samples: s }
            })
            .collect();
        let ds = FederatedDataset::new(shards, SampleSet::new(2), 10).unwrap();
        let losses = client_losses(&ds, &spec, &w, Parallelism::Rayon).unwrap();
        for l in losses {
            assert!((l - 10f64.ln()).abs() < 1e-12);
        }
    }
}
