//! Plain float64 forward and backward passes, used as the yardstick for the
//! reduced-precision paths.

use super::{Activation, Layer};

pub struct ReferencePass {
    /// `activations[0]` is the input batch; the last entry holds the logits.
    pub activations: Vec<Vec<f64>>,
    /// Pre-activation values of each layer.
    pub pre_activations: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceGradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

fn affine(a: &[f64], batch: usize, layer: &Layer) -> Vec<f64> {
    let mut z = Vec::with_capacity(batch * layer.outputs);
    for i in 0..batch {
        let row = &a[i * layer.inputs..(i + 1) * layer.inputs];
        for j in 0..layer.outputs {
            let s: f64 = row
                .iter()
                .enumerate()
                .map(|(k, &x)| x * layer.weight(k, j))
                .sum();
            z.push(s + layer.biases[j]);
        }
    }
    z
}

pub fn forward(
    layers: &[Layer],
    activation: Activation,
    x: &[f64],
    labels: &[usize],
) -> ReferencePass {
    let batch = labels.len();
    let mut activations = vec![x.to_vec()];
    let mut pre_activations = Vec::new();
    for (l, layer) in layers.iter().enumerate() {
        let z = affine(activations.last().unwrap(), batch, layer);
        let a = if l + 1 < layers.len() {
            z.iter().map(|&v| activation.apply(v)).collect()
        } else {
            z.clone()
        };
        pre_activations.push(z);
        activations.push(a);
    }
    let classes = layers.last().map_or(0, |l| l.outputs);
    let logits = activations.last().unwrap();
    let mut probabilities = Vec::with_capacity(logits.len());
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = &logits[i * classes..(i + 1) * classes];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = row.iter().map(|&v| (v - m).exp()).sum();
        probabilities.extend(row.iter().map(|&v| (v - m).exp() / s));
        loss += s.ln() - (row[y] - m);
    }
    ReferencePass {
        activations,
        pre_activations,
        probabilities,
        loss: loss / batch as f64,
    }
}

/// Gradients of `2^k` times the mean cross-entropy.
pub fn gradients(
    layers: &[Layer],
    activation: Activation,
    x: &[f64],
    labels: &[usize],
    scale_exponent: u32,
) -> ReferenceGradients {
    let pass = forward(layers, activation, x, labels);
    let batch = labels.len();
    let scale = 2f64.powi(scale_exponent as i32);
    let classes = layers.last().map_or(0, |l| l.outputs);
    let mut delta: Vec<f64> = pass
        .probabilities
        .iter()
        .enumerate()
        .map(|(idx, &p)| {
            let y = (labels[idx / classes] == idx % classes) as u8 as f64;
            (p - y) / batch as f64 * scale
        })
        .collect();
    let mut weights = vec![Vec::new(); layers.len()];
    let mut biases = vec![Vec::new(); layers.len()];
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let a = &pass.activations[l];
        let mut gw = vec![0.0; layer.inputs * layer.outputs];
        let mut gb = vec![0.0; layer.outputs];
        for i in 0..batch {
            for j in 0..layer.outputs {
                let d = delta[i * layer.outputs + j];
                gb[j] += d;
                for k in 0..layer.inputs {
                    gw[k * layer.outputs + j] += a[i * layer.inputs + k] * d;
                }
            }
        }
        weights[l] = gw;
        biases[l] = gb;
        if l > 0 {
            let z = &pass.pre_activations[l - 1];
            let mut next = vec![0.0; batch * layer.inputs];
            for i in 0..batch {
                for k in 0..layer.inputs {
                    let s: f64 = (0..layer.outputs)
                        .map(|j| delta[i * layer.outputs + j] * layer.weight(k, j))
                        .sum();
                    next[i * layer.inputs + k] = s * activation.derivative(z[i * layer.inputs + k]);
                }
            }
            delta = next;
        }
    }
    ReferenceGradients { weights, biases }
}

/// SGD update from gradients carrying a `2^k` factor.
pub fn sgd_step(
    layers: &[Layer],
    grads: &ReferenceGradients,
    learning_rate: f64,
    scale_exponent: u32,
) -> Vec<Layer> {
    let unscale = 2f64.powi(-(scale_exponent as i32));
    layers
        .iter()
        .zip(grads.weights.iter().zip(&grads.biases))
        .map(|(layer, (gw, gb))| Layer {
            weights: layer
                .weights
                .iter()
                .zip(gw)
                .map(|(&w, &g)| w - learning_rate * (g * unscale))
                .collect(),
            biases: layer
                .biases
                .iter()
                .zip(gb)
                .map(|(&b, &g)| b - learning_rate * (g * unscale))
                .collect(),
            ..layer.clone()
        })
        .collect()
}
