//! Fully connected ReLU network trained with mini-batch Adam.
//!
//! Inputs are z-scored with statistics frozen from the training set and
//! labels are divided by `target_scale` during training. Hidden layers use
//! inverted dropout, so inference needs no rescaling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::RegressorSpec;
use crate::error::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn he_uniform(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / inputs as f64).sqrt();
        Dense {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.random_range(-limit..limit)).collect(),
            biases: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.biases[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<Dense>,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
    pub target_scale: f64,
}

/// Per-sample, per-hidden-layer multipliers: 0 for dropped units,
/// `1/(1-p)` for kept ones.
pub type DropoutMasks = Vec<Vec<Vec<f64>>>;

/// Adam moment estimates plus step and epoch counters.
#[derive(Debug, Clone)]
pub struct MlpOptimizer {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    epoch: usize,
}

impl MlpOptimizer {
    pub fn new(model: &MlpModel) -> Self {
        let n = model.param_count();
        MlpOptimizer {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            epoch: 0,
        }
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }
}

/// Normalised inputs and scaled targets for one gradient step.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

struct Trace {
    /// Activations per layer, layer 0 = input.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of every dense layer.
    pre: Vec<Vec<f64>>,
}

impl MlpModel {
    /// He-uniform weights, zero biases, identity normalisation.
    pub fn new(input_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| Dense::he_uniform(w[0].max(1), w[1], &mut rng))
            .collect();
        MlpModel {
            layer_sizes: sizes,
            layers,
            norm_mean: vec![0.0; input_dim],
            norm_std: vec![1.0; input_dim],
            target_scale: 1.0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Flattened parameters: per layer, weights then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.biases);
        }
        p
    }

    pub fn set_parameters(&mut self, p: &[f64]) {
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&p[k..k + nw]);
            k += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&p[k..k + nb]);
            k += nb;
        }
    }

    pub fn fit_normalization(&mut self, x: &[Vec<f64>]) {
        let n = x.len() as f64;
        let d = self.layer_sizes[0];
        for j in 0..d {
            let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = x.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            self.norm_mean[j] = mean;
            self.norm_std[j] = if std > 1e-12 { std } else { 1.0 };
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.norm_mean.iter().zip(&self.norm_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn trace(&self, x: &[f64], mask: Option<&[Vec<f64>]>) -> Trace {
        let mut acts = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(acts.last().unwrap(), &mut z);
            let a: Vec<f64> = if li == last {
                z.clone()
            } else {
                let mut a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
                if let Some(m) = mask {
                    for (ai, mi) in a.iter_mut().zip(&m[li]) {
                        *ai *= mi;
                    }
                }
                a
            };
            pre.push(z);
            acts.push(a);
        }
        Trace { acts, pre }
    }

    /// Network output on already normalised inputs, in training units.
    pub fn forward_normalized(&self, x: &[f64]) -> f64 {
        self.trace(x, None).acts.last().unwrap()[0]
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.forward_normalized(&self.normalize(x)) * self.target_scale
    }

    /// Sign pattern of every hidden pre-activation; used to detect ReLU kinks.
    pub fn activation_pattern(&self, inputs: &[Vec<f64>], masks: Option<&DropoutMasks>) -> Vec<bool> {
        let mut out = Vec::new();
        for (s, x) in inputs.iter().enumerate() {
            let t = self.trace(x, masks.map(|m| m[s].as_slice()));
            for z in &t.pre[..t.pre.len() - 1] {
                out.extend(z.iter().map(|v| *v > 0.0));
            }
        }
        out
    }

    /// Mean squared error over the batch.
    pub fn batch_loss(&self, inputs: &[Vec<f64>], targets: &[f64], masks: Option<&DropoutMasks>) -> f64 {
        let n = inputs.len() as f64;
        inputs
            .iter()
            .enumerate()
            .map(|(s, x)| {
                let t = self.trace(x, masks.map(|m| m[s].as_slice()));
                let e = t.acts.last().unwrap()[0] - targets[s];
                e * e
            })
            .sum::<f64>()
            / n
    }

    /// Batch MSE and its gradient w.r.t. [`MlpModel::parameters`].
    pub fn loss_and_gradient(
        &self,
        inputs: &[Vec<f64>],
        targets: &[f64],
        masks: Option<&DropoutMasks>,
    ) -> (f64, Vec<f64>) {
        let n = inputs.len() as f64;
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
            .collect();
        let mut loss = 0.0;
        let last = self.layers.len() - 1;
        for (s, x) in inputs.iter().enumerate() {
            let mask = masks.map(|m| m[s].as_slice());
            let t = self.trace(x, mask);
            let err = t.acts.last().unwrap()[0] - targets[s];
            loss += err * err;
            // dL/dz for the output layer
            let mut delta = vec![2.0 * err / n];
            for li in (0..=last).rev() {
                let layer = &self.layers[li];
                let input = &t.acts[li];
                let (gw, gb) = &mut grads[li];
                for o in 0..layer.outputs {
                    gb[o] += delta[o];
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, a) in row.iter_mut().zip(input) {
                        *g += delta[o] * a;
                    }
                }
                if li == 0 {
                    break;
                }
                // back through the previous hidden layer's dropout and relu
                let prev_pre = &t.pre[li - 1];
                let mut next = vec![0.0; layer.inputs];
                for (i, nv) in next.iter_mut().enumerate() {
                    if prev_pre[i] <= 0.0 {
                        continue;
                    }
                    let mut acc = 0.0;
                    for o in 0..layer.outputs {
                        acc += layer.weights[o * layer.inputs + i] * delta[o];
                    }
                    if let Some(m) = mask {
                        acc *= m[li - 1][i];
                    }
                    *nv = acc;
                }
                delta = next;
            }
        }
        let mut flat = Vec::with_capacity(self.param_count());
        for (gw, gb) in grads {
            flat.extend(gw);
            flat.extend(gb);
        }
        (loss / n, flat)
    }

    pub fn draw_masks(&self, n_samples: usize, dropout: f64, rng: &mut ChaCha8Rng) -> DropoutMasks {
        let hidden = &self.layer_sizes[1..self.layer_sizes.len() - 1];
        let keep = 1.0 / (1.0 - dropout);
        (0..n_samples)
            .map(|_| {
                hidden
                    .iter()
                    .map(|&h| {
                        (0..h)
                            .map(|_| if rng.random::<f64>() < dropout { 0.0 } else { keep })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }
}

/// One pass of Adam over `batches`; returns the post-epoch MSE over all
/// batches (inference mode, training units).
pub fn mlp_train_epoch(
    model: &mut MlpModel,
    optimizer: &mut MlpOptimizer,
    batches: &[Batch],
    learning_rate: f64,
    dropout: f64,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = model.parameters();
    for batch in batches {
        let masks = (dropout > 0.0).then(|| model.draw_masks(batch.inputs.len(), dropout, &mut rng));
        let (_, grad) = model.loss_and_gradient(&batch.inputs, &batch.targets, masks.as_ref());
        optimizer.step += 1;
        let t = optimizer.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for k in 0..params.len() {
            let g = grad[k];
            optimizer.m[k] = ADAM_BETA1 * optimizer.m[k] + (1.0 - ADAM_BETA1) * g;
            optimizer.v[k] = ADAM_BETA2 * optimizer.v[k] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = optimizer.m[k] / c1;
            let v_hat = optimizer.v[k] / c2;
            params[k] -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        model.set_parameters(&params);
    }
    optimizer.epoch += 1;
    let total: usize = batches.iter().map(|b| b.inputs.len()).sum();
    let sse: f64 = batches
        .iter()
        .map(|b| model.batch_loss(&b.inputs, &b.targets, None) * b.inputs.len() as f64)
        .sum();
    let mse = sse / total.max(1) as f64;
    if !mse.is_finite() || params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Divergence {
            epoch: optimizer.epoch,
            learning_rate,
        });
    }
    Ok(mse)
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains a network with the hyperparameters in `spec`; returns the model and per-epoch MSE.
pub(crate) fn fit_mlp(spec: &RegressorSpec, x: &[Vec<f64>], y: &[f64]) -> Result<(MlpModel, Vec<f64>)> {
    let d = x.first().map_or(0, Vec::len);
    let hidden = [spec.get_usize("hidden1"), spec.get_usize("hidden2")];
    let mut model = MlpModel::new(d, &hidden, spec.seed);
    model.fit_normalization(x);
    model.target_scale = 100.0;
    let inputs: Vec<Vec<f64>> = x.iter().map(|r| model.normalize(r)).collect();
    let targets: Vec<f64> = y.iter().map(|v| v / model.target_scale).collect();

    let lr = spec.get("learning_rate");
    let dropout = spec.get("dropout");
    let batch_size = spec.get_usize("batch_size");
    let epochs = spec.get_usize("epochs");
    let mut optimizer = MlpOptimizer::new(&model);
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let seed = epoch_seed(spec.seed, epoch);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.rotate_left(17)));
        let batches: Vec<Batch> = order
            .chunks(batch_size)
            .map(|c| Batch {
                inputs: c.iter().map(|&i| inputs[i].clone()).collect(),
                targets: c.iter().map(|&i| targets[i]).collect(),
            })
            .collect();
        history.push(mlp_train_epoch(&mut model, &mut optimizer, &batches, lr, dropout, seed)?);
    }
    Ok((model, history))
}
