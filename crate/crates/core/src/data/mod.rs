//! Federated datasets: per-client shards, data fractions and the generators
//! and loaders that produce them.

mod cache;
mod dirichlet;
mod idx;
mod synthetic;

pub use cache::{load_dataset, read_dataset, save_dataset, write_dataset, CACHE_VERSION};
pub use dirichlet::{dirichlet_proportions, partition_dirichlet, MAX_PARTITION_ATTEMPTS};
pub use idx::{load_idx, parse_idx_images, parse_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use synthetic::{
    generate_synthetic, generate_synthetic_traced, powerlaw_sizes, ClientGenerator,
    SyntheticSpec,
};

use crate::{Error, Result};

/// One labelled example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// A table of samples sharing one feature dimension, stored row-major so that
/// minibatches and full shards can be fed to the model without copying.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    feature_dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl SampleSet {
    pub fn new(feature_dim: usize) -> Self {
        SampleSet {
            feature_dim,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn with_capacity(feature_dim: usize, n: usize) -> Self {
        SampleSet {
            feature_dim,
            features: Vec::with_capacity(feature_dim * n),
            labels: Vec::with_capacity(n),
        }
    }

    /// Build from a row-major feature matrix and matching labels.
    pub fn from_parts(feature_dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != feature_dim * labels.len() {
            return Err(Error::Dimension {
                expected: feature_dim * labels.len(),
                got: features.len(),
            });
        }
        Ok(SampleSet {
            feature_dim,
            features,
            labels,
        })
    }

    pub fn from_samples(feature_dim: usize, samples: &[Sample]) -> Result<Self> {
        let mut set = SampleSet::with_capacity(feature_dim, samples.len());
        for s in samples {
            set.push(&s.features, s.label)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, features: &[f64], label: usize) -> Result<()> {
        if features.len() != self.feature_dim {
            return Err(Error::Dimension {
                expected: self.feature_dim,
                got: features.len(),
            });
        }
        self.features.extend_from_slice(features);
        self.labels.push(label);
        Ok(())
    }

    /// Append row `i` of `other`. Both sets must share a feature dimension.
    pub(crate) fn push_row_of(&mut self, other: &SampleSet, i: usize) {
        debug_assert_eq!(self.feature_dim, other.feature_dim);
        self.features.extend_from_slice(other.features(i));
        self.labels.push(other.labels[i]);
    }

    pub fn clear(&mut self) {
        self.features.clear();
        self.labels.clear();
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The whole feature matrix, row-major, `len() x feature_dim()`.
    pub fn feature_matrix(&self) -> &[f64] {
        &self.features
    }

    pub fn sample(&self, i: usize) -> Sample {
        Sample {
            features: self.features(i).to_vec(),
            label: self.labels[i],
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&[f64], usize)> + '_ {
        self.features
            .chunks_exact(self.feature_dim.max(1))
            .zip(self.labels.iter().copied())
            .take(self.len())
    }

    pub fn subset(&self, indices: &[usize]) -> SampleSet {
        let mut out = SampleSet::with_capacity(self.feature_dim, indices.len());
        for &i in indices {
            out.push_row_of(self, i);
        }
        out
    }

    pub fn concat(sets: &[&SampleSet]) -> Result<SampleSet> {
        let dim = sets.first().map_or(0, |s| s.feature_dim);
        let total = sets.iter().map(|s| s.len()).sum();
        let mut out = SampleSet::with_capacity(dim, total);
        for s in sets {
            if s.feature_dim != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: s.feature_dim,
                });
            }
            out.features.extend_from_slice(&s.features);
            out.labels.extend_from_slice(&s.labels);
        }
        Ok(out)
    }

    /// Largest label + 1, or 0 for an empty set.
    pub fn label_bound(&self) -> usize {
        self.labels.iter().max().map_or(0, |&l| l + 1)
    }
}

/// The local training set of one client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientShard {
    pub client_id: usize,
    pub samples: SampleSet,
}

impl ClientShard {
    pub fn size(&self) -> usize {
        self.samples.len()
    }
}

/// `K` client shards, the data fractions `p_k` and a pooled test set.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedDataset {
    shards: Vec<ClientShard>,
    test_set: SampleSet,
    fractions: Vec<f64>,
    num_classes: usize,
    feature_dim: usize,
}

impl FederatedDataset {
    /// Assemble a dataset, checking that client ids are `0..K` in order, every
    /// shard is non-empty and all samples agree on dimension and label range.
    pub fn new(shards: Vec<ClientShard>, test_set: SampleSet, num_classes: usize) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::config("a federated dataset needs at least one client"));
        }
        let feature_dim = shards[0].samples.feature_dim();
        for (k, shard) in shards.iter().enumerate() {
            if shard.client_id != k {
                return Err(Error::config(format!(
                    "client ids must be contiguous: position {k} holds client {}",
                    shard.client_id
                )));
            }
            if shard.samples.feature_dim() != feature_dim {
                return Err(Error::Dimension {
                    expected: feature_dim,
                    got: shard.samples.feature_dim(),
                });
            }
            if shard.samples.label_bound() > num_classes {
                return Err(Error::config(format!(
                    "client {k} has label {} but num_classes = {num_classes}",
                    shard.samples.label_bound() - 1
                )));
            }
        }
        if !test_set.is_empty() && test_set.feature_dim() != feature_dim {
            return Err(Error::Dimension {
                expected: feature_dim,
                got: test_set.feature_dim(),
            });
        }
        let sizes: Vec<usize> = shards.iter().map(ClientShard::size).collect();
        let fractions = fractions(&sizes)?;
        Ok(FederatedDataset {
            shards,
            test_set,
            fractions,
            num_classes,
            feature_dim,
        })
    }

    pub fn with_test_set(mut self, test_set: SampleSet) -> Result<Self> {
        if !test_set.is_empty() && test_set.feature_dim() != self.feature_dim {
            return Err(Error::Dimension {
                expected: self.feature_dim,
                got: test_set.feature_dim(),
            });
        }
        self.test_set = test_set;
        Ok(self)
    }

    pub fn num_clients(&self) -> usize {
        self.shards.len()
    }

    pub fn shards(&self) -> &[ClientShard] {
        &self.shards
    }

    pub fn shard(&self, k: usize) -> &ClientShard {
        &self.shards[k]
    }

    pub fn test_set(&self) -> &SampleSet {
        &self.test_set
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.shards.iter().map(ClientShard::size).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn total_train_samples(&self) -> usize {
        self.shards.iter().map(ClientShard::size).sum()
    }
}

/// Data fractions `p_k = D_k / sum_j D_j`.
pub fn fractions(sizes: &[usize]) -> Result<Vec<f64>> {
    if let Some(k) = sizes.iter().position(|&d| d == 0) {
        return Err(Error::config(format!("client {k} has an empty shard")));
    }
    let total: usize = sizes.iter().sum();
    Ok(sizes.iter().map(|&d| d as f64 / total as f64).collect())
}
