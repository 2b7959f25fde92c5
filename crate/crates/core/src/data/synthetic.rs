//! Synthetic(alpha, beta) heterogeneous classification data.
//!
//! Client `k` owns a softmax-regression teacher `(W_k, b_k)` whose entries are
//! `N(u_k, 1)` with `u_k ~ N(0, alpha)`, and draws inputs `x ~ N(v_k, Sigma)`
//! with `Sigma = diag(j^-1.2)` and `(v_k)_j ~ N(B_k, 1)`, `B_k ~ N(0, beta)`.
//! Labels are `argmax(W_k x + b_k)`. `alpha` controls how much the teachers
//! differ across clients, `beta` how much the input distributions do. Normal
//! parameters are standard deviations.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ClientShard, FederatedDataset, SampleSet};
use crate::rng::{self, Domain};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub alpha: f64,
    pub beta: f64,
    pub num_clients: usize,
    /// Training samples over all clients.
    pub total_samples: usize,
    pub powerlaw_exponent: f64,
    pub min_shard: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    /// Fraction of each client's generated samples held out for the pooled
    /// test set.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            alpha: 1.0,
            beta: 1.0,
            num_clients: 30,
            total_samples: 6000,
            powerlaw_exponent: 1.5,
            min_shard: 10,
            feature_dim: 60,
            num_classes: 10,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::config("alpha and beta must be non-negative"));
        }
        if self.num_clients == 0 || self.feature_dim == 0 || self.num_classes < 2 {
            return Err(Error::config(
                "need at least one client, one feature and two classes",
            ));
        }
        if self.min_shard == 0 {
            return Err(Error::config("min_shard must be positive"));
        }
        if !(self.powerlaw_exponent > 0.0 && self.powerlaw_exponent.is_finite()) {
            return Err(Error::config("powerlaw_exponent must be positive"));
        }
        if self.total_samples < self.num_clients * self.min_shard {
            return Err(Error::config(format!(
                "total_samples = {} is below num_clients * min_shard = {}",
                self.total_samples,
                self.num_clients * self.min_shard
            )));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::config("test_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// The hidden generator of one client, exposed so tests can recompute labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientGenerator {
    pub weight_mean: f64,
    pub input_shift: f64,
    /// `num_classes x feature_dim`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub input_mean: Vec<f64>,
}

impl ClientGenerator {
    pub fn label(&self, x: &[f64]) -> usize {
        let dim = x.len();
        let mut best = 0;
        let mut best_logit = f64::NEG_INFINITY;
        for (c, b) in self.bias.iter().enumerate() {
            let row = &self.weights[c * dim..(c + 1) * dim];
            let logit = row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b;
            if logit > best_logit {
                best_logit = logit;
                best = c;
            }
        }
        best
    }
}

/// Power-law shard sizes: Zipf weights `k^-s` over client rank scaled to
/// `total`, floored, raised to `min_shard`; rounding slack goes to client 0.
///
/// If raising small clients to `min_shard` overshoots `total`, the excess is
/// taken one sample at a time from the currently largest client (highest
/// index among ties), which keeps sizes non-increasing.
pub fn powerlaw_sizes(total: usize, num_clients: usize, exponent: f64, min_shard: usize) -> Result<Vec<usize>> {
    if num_clients == 0 {
        return Err(Error::config("num_clients must be positive"));
    }
    if total < num_clients * min_shard {
        return Err(Error::config(format!(
            "total_samples = {total} is below num_clients * min_shard = {}",
            num_clients * min_shard
        )));
    }
    let weights: Vec<f64> = (1..=num_clients).map(|k| (k as f64).powf(-exponent)).collect();
    let norm: f64 = weights.iter().sum();
    let mut sizes: Vec<usize> = weights
        .iter()
        .map(|w| ((total as f64 * w / norm).floor() as usize).max(min_shard))
        .collect();
    let assigned: usize = sizes.iter().sum();
    if assigned <= total {
        sizes[0] += total - assigned;
    } else {
        for _ in 0..assigned - total {
            let max = *sizes.iter().max().expect("non-empty");
            let k = sizes.iter().rposition(|&d| d == max).expect("max exists");
            sizes[k] -= 1;
        }
    }
    Ok(sizes)
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<FederatedDataset> {
    generate_synthetic_traced(spec).map(|(ds, _)| ds)
}

/// Like [`generate_synthetic`], also returning each client's generator.
pub fn generate_synthetic_traced(spec: &SyntheticSpec) -> Result<(FederatedDataset, Vec<ClientGenerator>)> {
    spec.validate()?;
    let sizes = powerlaw_sizes(
        spec.total_samples,
        spec.num_clients,
        spec.powerlaw_exponent,
        spec.min_shard,
    )?;
    // Per-coordinate standard deviation of x: sqrt(j^-1.2) with 1-based j.
    let input_std: Vec<f64> = (1..=spec.feature_dim)
        .map(|j| (j as f64).powf(-1.2).sqrt())
        .collect();

    let mut shards = Vec::with_capacity(spec.num_clients);
    let mut generators = Vec::with_capacity(spec.num_clients);
    let mut test_parts = Vec::with_capacity(spec.num_clients);
    for (k, &train_size) in sizes.iter().enumerate() {
        let mut rng = rng::stream(spec.seed, Domain::Synthetic, k as u64, 0);
        let generator = draw_generator(spec, &mut rng);
        let held_out =
            (train_size as f64 * spec.test_fraction / (1.0 - spec.test_fraction)).round() as usize;

        let mut train = SampleSet::with_capacity(spec.feature_dim, train_size);
        let mut test = SampleSet::with_capacity(spec.feature_dim, held_out);
        let mut x = vec![0.0; spec.feature_dim];
        for i in 0..train_size + held_out {
            for (j, xj) in x.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *xj = generator.input_mean[j] + input_std[j] * z;
            }
            let y = generator.label(&x);
            let target = if i < train_size { &mut train } else { &mut test };
            target.push(&x, y)?;
        }
        shards.push(ClientShard {
            client_id: k,
            samples: train,
        });
        test_parts.push(test);
        generators.push(generator);
    }
    let test_refs: Vec<&SampleSet> = test_parts.iter().collect();
    let test_set = if test_refs.is_empty() {
        SampleSet::new(spec.feature_dim)
    } else {
        SampleSet::concat(&test_refs)?
    };
    let ds = FederatedDataset::new(shards, test_set, spec.num_classes)?;
    Ok((ds, generators))
}

fn draw_generator<R: Rng>(spec: &SyntheticSpec, rng: &mut R) -> ClientGenerator {
    let weight_mean = normal(0.0, spec.alpha).sample(rng);
    let input_shift = normal(0.0, spec.beta).sample(rng);
    let unit = normal(weight_mean, 1.0);
    let weights: Vec<f64> = (0..spec.num_classes * spec.feature_dim)
        .map(|_| unit.sample(rng))
        .collect();
    let bias: Vec<f64> = (0..spec.num_classes).map(|_| unit.sample(rng)).collect();
    let shifted = normal(input_shift, 1.0);
    let input_mean: Vec<f64> = (0..spec.feature_dim).map(|_| shifted.sample(rng)).collect();
    ClientGenerator {
        weight_mean,
        input_shift,
        weights,
        bias,
        input_mean,
    }
}

fn normal(mean: f64, std: f64) -> Normal<f64> {
    Normal::new(mean, std).expect("std validated non-negative")
}
