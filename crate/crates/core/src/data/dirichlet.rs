//! Label-skewed partitioning with per-class Dirichlet proportions.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::{ClientShard, FederatedDataset, SampleSet};
use crate::rng::{self, Domain};
use crate::{Error, Result};

/// Redraws allowed before a `min_shard` constraint is declared infeasible.
pub const MAX_PARTITION_ATTEMPTS: usize = 1000;

/// One draw from `Dirichlet(alpha * 1_K)` as normalised `Gamma(alpha, 1)`
/// variates. All-zero draws (possible for tiny `alpha`) are redrawn.
pub fn dirichlet_proportions<R: Rng>(alpha: f64, k: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    loop {
        let g: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = g.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return g.into_iter().map(|x| x / sum).collect();
        }
    }
}

/// Split `samples` over `num_clients` clients.
///
/// Classes are processed in ascending label order. For each class the
/// sample indices are shuffled, a proportion vector is drawn from
/// `Dirichlet(alpha_dir)`, and the shuffled indices are cut at
/// `round(cumsum(p) * n_c)`. The whole draw is repeated until every shard has
/// at least `min_shard` samples. The returned dataset has an empty test set;
/// attach one with [`FederatedDataset::with_test_set`].
pub fn partition_dirichlet(
    samples: &SampleSet,
    num_clients: usize,
    alpha_dir: f64,
    min_shard: usize,
    seed: u64,
) -> Result<FederatedDataset> {
    if samples.is_empty() {
        return Err(Error::config("cannot partition an empty sample set"));
    }
    if num_clients == 0 {
        return Err(Error::config("num_clients must be positive"));
    }
    if !(alpha_dir > 0.0 && alpha_dir.is_finite()) {
        return Err(Error::config("dirichlet alpha must be positive and finite"));
    }
    if samples.len() < num_clients * min_shard {
        return Err(Error::config(format!(
            "{} samples cannot give {num_clients} clients {min_shard} samples each",
            samples.len()
        )));
    }
    let num_classes = samples.label_bound();
    let mut by_class = vec![Vec::new(); num_classes];
    for (i, &y) in samples.labels().iter().enumerate() {
        by_class[y].push(i);
    }

    let mut rng = rng::stream(seed, Domain::Partition, num_clients as u64, 0);
    for _ in 0..MAX_PARTITION_ATTEMPTS {
        let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
        for class in &by_class {
            if class.is_empty() {
                continue;
            }
            let mut idx = class.clone();
            idx.shuffle(&mut rng);
            let props = dirichlet_proportions(alpha_dir, num_clients, &mut rng);
            let n = idx.len();
            let mut start = 0;
            let mut cum = 0.0;
            for (k, p) in props.iter().enumerate() {
                cum += p;
                let end = if k + 1 == num_clients {
                    n
                } else {
                    ((cum * n as f64).round() as usize).clamp(start, n)
                };
                assignment[k].extend_from_slice(&idx[start..end]);
                start = end;
            }
        }
        if assignment.iter().all(|a| a.len() >= min_shard.max(1)) {
            let shards = assignment
                .iter()
                .enumerate()
                .map(|(k, idx)| ClientShard {
                    client_id: k,
                    samples: samples.subset(idx),
                })
                .collect();
            return FederatedDataset::new(shards, SampleSet::new(samples.feature_dim()), num_classes);
        }
    }
    Err(Error::config(format!(
        "no Dirichlet(alpha = {alpha_dir}) partition gave every client {min_shard} samples \
         after {MAX_PARTITION_ATTEMPTS} attempts"
    )))
}
