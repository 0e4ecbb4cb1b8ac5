//! Multilayer perceptron: sigmoid hidden layers, softmax output,
//! cross-entropy loss, per-instance SGD with momentum.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_train_counts, Dataset};
use crate::error::{Error, Result};
use crate::math::{argmax, sigmoid, softmax_in_place, sqrt, Standardizer};
use crate::rng::{rng_from_seed, Rng};

/// Hold-out early stopping: train on the rest, keep the weights with the
/// best hold-out accuracy, stop after `patience` epochs without improvement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub holdout_fraction: f64,
    pub patience: usize,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        EarlyStopping { holdout_fraction: 0.2, patience: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// Hidden layer sizes; `None` is one layer of `(m + c) / 2` units.
    pub hidden: Option<Vec<usize>>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub early_stopping: Option<EarlyStopping>,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams { hidden: None, learning_rate: 0.01, momentum: 0.9, epochs: 500, early_stopping: None }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(h) = &self.hidden {
            if h.is_empty() || h.contains(&0) {
                return Err(Error::InvalidParams("mlp hidden layers must be non-empty and positive".into()));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParams(format!("mlp learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParams("mlp momentum must lie in [0, 1)".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParams("mlp epochs must be >= 1".into()));
        }
        if let Some(es) = &self.early_stopping {
            if !(es.holdout_fraction > 0.0 && es.holdout_fraction < 1.0) || es.patience == 0 {
                return Err(Error::InvalidParams("invalid mlp early stopping settings".into()));
            }
        }
        Ok(())
    }

    pub fn layer_sizes(&self, m: usize, c: usize) -> Vec<usize> {
        let hidden = match &self.hidden {
            Some(h) => h.clone(),
            None => vec![((m + c) / 2).max(1)],
        };
        let mut sizes = vec![m];
        sizes.extend(hidden);
        sizes.push(c);
        sizes
    }
}

/// Dense layer weights, `out` rows of `inp + 1` (bias last).
#[derive(Debug, Clone)]
struct Layer {
    inp: usize,
    out: usize,
    w: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    scaler: Standardizer,
    layers: Vec<Layer>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) epochs_run: usize,
}

struct Net {
    layers: Vec<Layer>,
    velocity: Vec<Vec<f64>>,
    /// Activations per layer, input included.
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Net {
    fn new(sizes: &[usize], rng: &mut Rng) -> Self {
        let layers: Vec<Layer> = sizes
            .windows(2)
            .map(|w| {
                let (inp, out) = (w[0], w[1]);
                let bound = sqrt(6.0 / (inp + out) as f64);
                let weights = (0..out * (inp + 1))
                    .map(|k| if k % (inp + 1) == inp { 0.0 } else { rng.gen_range(-bound..bound) })
                    .collect();
                Layer { inp, out, w: weights }
            })
            .collect();
        Net {
            velocity: layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            acts: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            deltas: sizes[1..].iter().map(|&s| vec![0.0; s]).collect(),
            layers,
        }
    }

    fn forward(&mut self, x: &[f64]) {
        self.acts[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = self.acts.split_at_mut(l + 1);
            forward_layer(layer, &before[l], &mut after[0], l == last);
        }
    }

    fn step(&mut self, x: &[f64], y: usize, lr: f64, momentum: f64) {
        self.forward(x);
        let last = self.layers.len() - 1;
        for (k, d) in self.deltas[last].iter_mut().enumerate() {
            *d = self.acts[last + 1][k] - if k == y { 1.0 } else { 0.0 };
        }
        for l in (0..last).rev() {
            let next = &self.layers[l + 1];
            let (lower, upper) = self.deltas.split_at_mut(l + 1);
            for (j, d) in lower[l].iter_mut().enumerate() {
                let back: f64 = (0..next.out).map(|k| next.w[k * (next.inp + 1) + j] * upper[0][k]).sum();
                let a = self.acts[l + 1][j];
                *d = back * a * (1.0 - a);
            }
        }
        for l in 0..=last {
            let layer = &mut self.layers[l];
            let v = &mut self.velocity[l];
            let input = &self.acts[l];
            let stride = layer.inp + 1;
            for (k, &d) in self.deltas[l].iter().enumerate() {
                let row = k * stride;
                for (i, &a) in input.iter().enumerate() {
                    let u = momentum * v[row + i] - lr * d * a;
                    v[row + i] = u;
                    layer.w[row + i] += u;
                }
                let u = momentum * v[row + layer.inp] - lr * d;
                v[row + layer.inp] = u;
                layer.w[row + layer.inp] += u;
            }
        }
    }
}

fn forward_layer(layer: &Layer, input: &[f64], out: &mut [f64], softmax: bool) {
    let stride = layer.inp + 1;
    for (k, o) in out.iter_mut().enumerate() {
        let row = &layer.w[k * stride..(k + 1) * stride];
        let z = row[..layer.inp].iter().zip(input).map(|(w, a)| w * a).sum::<f64>() + row[layer.inp];
        *o = if softmax { z } else { sigmoid(z) };
    }
    if softmax {
        softmax_in_place(out);
    }
}

fn predict(layers: &[Layer], x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    for (l, layer) in layers.iter().enumerate() {
        let mut out = vec![0.0; layer.out];
        forward_layer(layer, &a, &mut out, l + 1 == layers.len());
        a = out;
    }
    a
}

/// Stratified hold-out indices for early stopping: `(train, holdout)`.
fn holdout_split(data: &Dataset, fraction: f64, rng: &mut Rng) -> Option<(Vec<usize>, Vec<usize>)> {
    let counts = data.class_counts();
    if counts.iter().any(|&k| k < 2) {
        return None;
    }
    let keep = stratified_train_counts(&counts, 1.0 - fraction);
    let mut train = Vec::new();
    let mut hold = Vec::new();
    for (j, mut members) in data.class_indices().into_iter().enumerate() {
        members.shuffle(rng);
        let k = keep[j].clamp(1, members.len() - 1);
        train.extend_from_slice(&members[..k]);
        hold.extend_from_slice(&members[k..]);
    }
    Some((train, hold))
}

pub fn fit(params: &MlpParams, data: &Dataset, seed: u64) -> Result<MlpModel> {
    let (n, m, c) = (data.n(), data.m(), data.c());
    let scaler = Standardizer::fit(data.rows(), m);
    let x: Vec<Vec<f64>> = (0..n).map(|i| scaler.transform(data.row(i))).collect();
    let mut rng = rng_from_seed(seed);
    let sizes = params.layer_sizes(m, c);

    let split = params
        .early_stopping
        .and_then(|es| holdout_split(data, es.holdout_fraction, &mut rng).map(|s| (es, s)));
    let mut net = Net::new(&sizes, &mut rng);
    let (mut order, holdout) = match &split {
        Some((_, (train, hold))) => (train.clone(), hold.clone()),
        None => ((0..n).collect(), Vec::new()),
    };

    let mut best: Option<(usize, Vec<Layer>)> = None;
    let mut since_best = 0;
    let mut epochs_run = 0;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            net.step(&x[i], data.label(i), params.learning_rate, params.momentum);
        }
        epochs_run += 1;
        if let Some((es, _)) = &split {
            let correct = holdout
                .iter()
                .filter(|&&i| argmax(&predict(&net.layers, &x[i])) == data.label(i))
                .count();
            if best.as_ref().is_none_or(|(b, _)| correct > *b) {
                best = Some((correct, net.layers.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= es.patience {
                    break;
                }
            }
        }
    }
    if net.layers.iter().any(|l| l.w.iter().any(|w| !w.is_finite())) {
        return Err(Error::Degenerate("mlp weights diverged".into()));
    }
    let layers = best.map_or(net.layers, |(_, l)| l);
    Ok(MlpModel { scaler, layers, epochs_run })
}

impl MlpModel {
    pub fn distribution(&self, x: &[f64]) -> Vec<f64> {
        predict(&self.layers, &self.scaler.transform(x))
    }
}
