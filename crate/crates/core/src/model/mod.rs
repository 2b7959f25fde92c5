//! Softmax classifiers with hand-derived gradients.
//!
//! Both supported architectures are dense networks ending in a softmax
//! cross-entropy loss: multinomial logistic regression has no hidden layer,
//! the MLP has exactly two ReLU hidden layers. Each layer stores an
//! `out x in` weight matrix followed by its bias in the flat [`ParamVector`].

mod network;
mod params;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use params::{Layout, ParamVector, Segment};

use crate::data::SampleSet;
use crate::rng::{self, Domain};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub hidden: Vec<usize>,
}

impl ModelSpec {
    pub fn logistic(input_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Logistic,
            input_dim,
            num_classes,
            hidden: Vec::new(),
        }
    }

    pub fn mlp(input_dim: usize, hidden: [usize; 2], num_classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Mlp,
            input_dim,
            num_classes,
            hidden: hidden.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes < 2 {
            return Err(Error::config("model needs input_dim >= 1 and num_classes >= 2"));
        }
        match self.kind {
            ModelKind::Logistic if !self.hidden.is_empty() => {
                Err(Error::config("logistic model takes no hidden layers"))
            }
            ModelKind::Mlp if self.hidden.len() != 2 => Err(Error::config(format!(
                "mlp needs exactly two hidden widths, got {}",
                self.hidden.len()
            ))),
            _ if self.hidden.contains(&0) => Err(Error::config("hidden widths must be positive")),
            _ => Ok(()),
        }
    }

    /// Layer widths from input to output.
    pub(crate) fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.num_classes);
        w
    }

    pub fn layout(&self) -> Layout {
        let widths = self.widths();
        let mut segments = Vec::with_capacity(2 * (widths.len() - 1));
        for (l, pair) in widths.windows(2).enumerate() {
            segments.push(Segment {
                name: format!("layer{l}.weight"),
                rows: pair[1],
                cols: pair[0],
            });
            segments.push(Segment {
                name: format!("layer{l}.bias"),
                rows: pair[1],
                cols: 1,
            });
        }
        Layout { segments }
    }

    pub fn num_params(&self) -> usize {
        self.layout().total_len()
    }
}

/// Mean loss and gradient over one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct MinibatchEval {
    pub mean_loss: f64,
    pub gradient: ParamVector,
    pub batch_size: usize,
}

/// Logistic regression starts at zero; MLP weights are Glorot-uniform in
/// `+-sqrt(6 / (fan_in + fan_out))` with zero biases.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ParamVector> {
    spec.validate()?;
    let layout = spec.layout();
    let mut params = ParamVector::zeros(layout.clone());
    if spec.kind == ModelKind::Logistic {
        return Ok(params);
    }
    let mut rng = rng::stream(seed, Domain::Init, 0, 0);
    let offsets = layout.offsets();
    let values = params.values_mut();
    for (seg, start) in layout.segments.iter().zip(offsets) {
        if seg.cols == 1 {
            continue;
        }
        let bound = (6.0 / (seg.rows + seg.cols) as f64).sqrt();
        for v in &mut values[start..start + seg.len()] {
            *v = rng.random_range(-bound..bound);
        }
    }
    Ok(params)
}

fn check_inputs(spec: &ModelSpec, w: &ParamVector, batch: &SampleSet) -> Result<()> {
    if w.len() != spec.num_params() {
        return Err(Error::Dimension {
            expected: spec.num_params(),
            got: w.len(),
        });
    }
    if batch.feature_dim() != spec.input_dim {
        return Err(Error::Dimension {
            expected: spec.input_dim,
            got: batch.feature_dim(),
        });
    }
    if let Some(&bad) = batch.labels().iter().find(|&&y| y >= spec.num_classes) {
        return Err(Error::config(format!(
            "label {bad} out of range for {} classes",
            spec.num_classes
        )));
    }
    Ok(())
}

fn non_empty(batch: &SampleSet) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::config("loss over an empty batch"));
    }
    Ok(())
}

/// Sum of per-sample cross-entropy losses. Also defined for an empty set.
pub fn loss_sum(spec: &ModelSpec, w: &ParamVector, samples: &SampleSet) -> Result<f64> {
    check_inputs(spec, w, samples)?;
    Ok(network::evaluate(spec, w.values(), samples, None))
}

/// Mean cross-entropy of the softmax outputs over `batch`.
pub fn loss(spec: &ModelSpec, w: &ParamVector, batch: &SampleSet) -> Result<f64> {
    non_empty(batch)?;
    Ok(loss_sum(spec, w, batch)? / batch.len() as f64)
}

/// Mean loss and its gradient. `mean_loss` is produced by the same code path
/// as [`loss`] and matches it bit for bit.
pub fn loss_and_grad(spec: &ModelSpec, w: &ParamVector, batch: &SampleSet) -> Result<MinibatchEval> {
    non_empty(batch)?;
    check_inputs(spec, w, batch)?;
    let mut gradient = ParamVector::zeros(w.layout().clone());
    let sum = network::evaluate(spec, w.values(), batch, Some(gradient.values_mut()));
    Ok(MinibatchEval {
        mean_loss: sum / batch.len() as f64,
        gradient,
        batch_size: batch.len(),
    })
}

/// Number of samples whose arg-max logit (lowest index on ties) is the label.
pub fn correct_count(spec: &ModelSpec, w: &ParamVector, samples: &SampleSet) -> Result<usize> {
    check_inputs(spec, w, samples)?;
    Ok(network::count_correct(spec, w.values(), samples))
}

pub fn accuracy(spec: &ModelSpec, w: &ParamVector, samples: &SampleSet) -> Result<f64> {
    non_empty(samples)?;
    Ok(correct_count(spec, w, samples)? as f64 / samples.len() as f64)
}
