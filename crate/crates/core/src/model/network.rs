//! Dense forward/backward passes over row-major sample blocks.
//!
//! Rows are processed in chunks of [`CHUNK`] so that evaluating a large shard
//! needs bounded scratch memory. Per-sample losses are accumulated in row
//! order, so the loss sum does not depend on how the caller batches.

use matrixmultiply::dgemm;

use super::ModelSpec;
use crate::data::SampleSet;

const CHUNK: usize = 256;

/// `out (n x cols_out) = input (n x cols_in) * weight^T + bias`, where
/// `weight` is `cols_out x cols_in` row-major.
fn affine(input: &[f64], n: usize, cols_in: usize, weight: &[f64], bias: &[f64], out: &mut [f64]) {
    let cols_out = bias.len();
    for row in out.chunks_exact_mut(cols_out) {
        row.copy_from_slice(bias);
    }
    // SAFETY: slices hold n*cols_in, cols_out*cols_in and n*cols_out elements
    // and the strides below stay inside them.
    unsafe {
        dgemm(
            n,
            cols_in,
            cols_out,
            1.0,
            input.as_ptr(),
            cols_in as isize,
            1,
            weight.as_ptr(),
            1,
            cols_in as isize,
            1.0,
            out.as_mut_ptr(),
            cols_out as isize,
            1,
        );
    }
}

/// Row-wise: loss_i = logsumexp(z_i) - z_i[y_i]. When `probs_minus_onehot`
/// is requested, `logits` is overwritten with `(softmax(z_i) - e_{y_i}) * scale`.
fn softmax_xent(logits: &mut [f64], labels: &[usize], classes: usize, grad_scale: Option<f64>) -> f64 {
    let mut total = 0.0;
    for (z, &y) in logits.chunks_exact_mut(classes).zip(labels) {
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = z.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum_exp.ln();
        total += lse - z[y];
        if let Some(scale) = grad_scale {
            for v in z.iter_mut() {
                *v = (*v - lse).exp() * scale;
            }
            z[y] -= scale;
        }
    }
    total
}

struct LayerView<'a> {
    weight: &'a [f64],
    bias: &'a [f64],
    fan_in: usize,
    fan_out: usize,
    weight_offset: usize,
    bias_offset: usize,
}

fn layers<'a>(spec: &ModelSpec, params: &'a [f64]) -> Vec<LayerView<'a>> {
    let widths = spec.widths();
    let mut offset = 0;
    widths
        .windows(2)
        .map(|pair| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let weight_offset = offset;
            let bias_offset = offset + fan_in * fan_out;
            offset = bias_offset + fan_out;
            LayerView {
                weight: &params[weight_offset..bias_offset],
                bias: &params[bias_offset..offset],
                fan_in,
                fan_out,
                weight_offset,
                bias_offset,
            }
        })
        .collect()
}

/// Forward pass of one chunk, keeping every layer's output. Hidden outputs
/// are post-ReLU; the last entry holds the logits.
fn forward(layers: &[LayerView<'_>], x: &[f64], n: usize) -> Vec<Vec<f64>> {
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate() {
        let input = if l == 0 { x } else { &acts[l - 1] };
        let mut out = vec![0.0; n * layer.fan_out];
        affine(input, n, layer.fan_in, layer.weight, layer.bias, &mut out);
        if l + 1 < layers.len() {
            for v in &mut out {
                *v = v.max(0.0);
            }
        }
        acts.push(out);
    }
    acts
}

/// Sum of per-sample losses over `samples`. With `grad`, also accumulates the
/// gradient of the *mean* loss into it (`grad` must start zeroed).
pub(super) fn evaluate(spec: &ModelSpec, params: &[f64], samples: &SampleSet, mut grad: Option<&mut [f64]>) -> f64 {
    let layers = layers(spec, params);
    let dim = samples.feature_dim();
    let n_total = samples.len();
    let scale = 1.0 / n_total.max(1) as f64;
    let classes = spec.num_classes;
    let mut total = 0.0;

    let features = samples.feature_matrix();
    let labels = samples.labels();
    for start in (0..n_total).step_by(CHUNK) {
        let n = CHUNK.min(n_total - start);
        let x = &features[start * dim..(start + n) * dim];
        let y = &labels[start..start + n];
        let mut acts = forward(&layers, x, n);
        let grad_scale = grad.as_ref().map(|_| scale);
        let logits = acts.last_mut().expect("at least one layer");
        total += softmax_xent(logits, y, classes, grad_scale);

        if let Some(g) = grad.as_deref_mut() {
            backward(&layers, x, n, acts, g);
        }
    }
    total
}

/// `acts.last()` must already hold dL/dlogits for the chunk.
fn backward(layers: &[LayerView<'_>], x: &[f64], n: usize, mut acts: Vec<Vec<f64>>, grad: &mut [f64]) {
    let mut delta = acts.pop().expect("logit gradient");
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let input: &[f64] = if l == 0 { x } else { &acts[l - 1] };
        let (fan_in, fan_out) = (layer.fan_in, layer.fan_out);

        // dW += delta^T * input
        let dw = &mut grad[layer.weight_offset..layer.bias_offset];
        // SAFETY: delta is n x fan_out, input n x fan_in, dw fan_out x fan_in.
        unsafe {
            dgemm(
                fan_out,
                n,
                fan_in,
                1.0,
                delta.as_ptr(),
                1,
                fan_out as isize,
                input.as_ptr(),
                fan_in as isize,
                1,
                1.0,
                dw.as_mut_ptr(),
                fan_in as isize,
                1,
            );
        }
        let db = &mut grad[layer.bias_offset..layer.bias_offset + fan_out];
        for row in delta.chunks_exact(fan_out) {
            for (b, d) in db.iter_mut().zip(row) {
                *b += d;
            }
        }

        if l > 0 {
            // delta_prev = (delta * W) masked by the ReLU of the previous layer.
            let mut prev = vec![0.0; n * fan_in];
            // SAFETY: delta n x fan_out, weight fan_out x fan_in, prev n x fan_in.
            unsafe {
                dgemm(
                    n,
                    fan_out,
                    fan_in,
                    1.0,
                    delta.as_ptr(),
                    fan_out as isize,
                    1,
                    layer.weight.as_ptr(),
                    fan_in as isize,
                    1,
                    0.0,
                    prev.as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            for (d, &a) in prev.iter_mut().zip(input) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            delta = prev;
        }
    }
}

pub(super) fn count_correct(spec: &ModelSpec, params: &[f64], samples: &SampleSet) -> usize {
    let layers = layers(spec, params);
    let dim = samples.feature_dim();
    let classes = spec.num_classes;
    let mut correct = 0;
    for start in (0..samples.len()).step_by(CHUNK) {
        let n = CHUNK.min(samples.len() - start);
        let x = &samples.feature_matrix()[start * dim..(start + n) * dim];
        let acts = forward(&layers, x, n);
        let logits = acts.last().expect("at least one layer");
        for (z, &y) in logits.chunks_exact(classes).zip(&samples.labels()[start..start + n]) {
            let mut best = 0;
            for c in 1..classes {
                if z[c] > z[best] {
                    best = c;
                }
            }
            if best == y {
                correct += 1;
            }
        }
    }
    correct
}
