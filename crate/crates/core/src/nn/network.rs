use serde::{Deserialize, Serialize};

use super::layers::{BatchNormCache, BatchNormLayer, DenseLayer, DropoutLayer};
use super::loss::weighted_cross_entropy_grad;
use super::matrix::Matrix;
use super::{Activation, ClassWeights, Forward, Objective, Parameterized, Pass, Step};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense(DenseLayer),
    BatchNorm(BatchNormLayer),
    Dropout(DropoutLayer),
}

/// Sequential stack of dense, batch-norm and dropout layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNetwork {
    layers: Vec<Layer>,
}

#[derive(Debug, Clone)]
enum LayerCache {
    Dense,
    BatchNorm(BatchNormCache),
    Dropout(Option<Vec<f64>>),
}

/// Activations and caches of one forward pass; `activations[0]` is the input.
#[derive(Debug, Clone)]
pub struct NetworkTrace {
    activations: Vec<Matrix>,
    caches: Vec<LayerCache>,
}

impl NetworkTrace {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("trace holds the input")
    }

    /// Output of layer `index`.
    pub fn layer_output(&self, index: usize) -> &Matrix {
        &self.activations[index + 1]
    }
}

impl DenseNetwork {
    /// Validates that consecutive layer widths agree.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let mut width: Option<usize> = None;
        for layer in &layers {
            match layer {
                Layer::Dense(d) => {
                    if let Some(w) = width {
                        if w != d.inputs() {
                            return Err(Error::shape("layer chain", w, d.inputs()));
                        }
                    }
                    width = Some(d.outputs());
                }
                Layer::BatchNorm(bn) => {
                    if let Some(w) = width {
                        if w != bn.dim() {
                            return Err(Error::shape("layer chain", w, bn.dim()));
                        }
                    }
                    width = Some(bn.dim());
                }
                Layer::Dropout(_) => {}
            }
        }
        if width.is_none() {
            return Err(Error::config("network", "needs at least one dense or batch-norm layer"));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers
            .iter()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d.inputs()),
                Layer::BatchNorm(bn) => Some(bn.dim()),
                Layer::Dropout(_) => None,
            })
            .expect("validated on construction")
    }

    pub fn output_width(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d.outputs()),
                Layer::BatchNorm(bn) => Some(bn.dim()),
                Layer::Dropout(_) => None,
            })
            .expect("validated on construction")
    }

    /// Runs the first `depth` layers. Dropout layer `k` draws its mask from
    /// `pass.substream(k)`.
    pub fn forward_trace(&self, x: &Matrix, pass: Pass, depth: usize) -> Result<NetworkTrace> {
        let mut activations = Vec::with_capacity(depth + 1);
        let mut caches = Vec::with_capacity(depth);
        activations.push(x.clone());
        for (k, layer) in self.layers.iter().take(depth).enumerate() {
            let input = activations.last().expect("non-empty");
            let (out, cache) = match layer {
                Layer::Dense(d) => (d.forward(input)?, LayerCache::Dense),
                Layer::BatchNorm(bn) => {
                    let (out, cache) = bn.forward(input, pass)?;
                    (out, LayerCache::BatchNorm(cache))
                }
                Layer::Dropout(dr) => {
                    let (out, mask) = dr.forward(input, pass.substream(k as u64));
                    (out, LayerCache::Dropout(mask))
                }
            };
            activations.push(out);
            caches.push(cache);
        }
        Ok(NetworkTrace { activations, caches })
    }

    pub fn forward(&self, x: &Matrix, pass: Pass) -> Result<Matrix> {
        let trace = self.forward_trace(x, pass, self.layers.len())?;
        Ok(trace.activations.into_iter().last().expect("non-empty"))
    }

    /// On/off pattern of every ReLU unit in the trace.
    pub fn relu_pattern(&self, trace: &NetworkTrace) -> Vec<bool> {
        let mut kinks = Vec::new();
        for (k, layer) in self.layers.iter().enumerate().take(trace.caches.len()) {
            if let Layer::Dense(d) = layer {
                if d.activation() == Activation::Relu {
                    kinks.extend(trace.layer_output(k).as_slice().iter().map(|&v| v > 0.0));
                }
            }
        }
        kinks
    }

    /// Backpropagates `d_out` (gradient w.r.t. the trace output) through the
    /// full stack. Returns parameter gradients in [`Parameterized`] order and
    /// the gradient w.r.t. the network input.
    pub fn backward(&self, trace: &NetworkTrace, d_out: &Matrix) -> (Vec<Vec<f64>>, Matrix) {
        let mut grads_rev: Vec<Vec<f64>> = Vec::new();
        let mut delta = d_out.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.activations[k];
            let output = &trace.activations[k + 1];
            match (layer, &trace.caches[k]) {
                (Layer::Dense(d), _) => {
                    let (g, dx) = d.backward(input, output, &delta);
                    grads_rev.push(g.bias);
                    grads_rev.push(g.weights);
                    delta = dx;
                }
                (Layer::BatchNorm(bn), LayerCache::BatchNorm(cache)) => {
                    let (g, dx) = bn.backward(cache, &delta);
                    grads_rev.push(g.beta);
                    grads_rev.push(g.gamma);
                    delta = dx;
                }
                (Layer::Dropout(_), LayerCache::Dropout(mask)) => {
                    delta = DropoutLayer::backward(mask.as_deref(), &delta);
                }
                _ => unreachable!("cache kind follows layer kind"),
            }
        }
        grads_rev.reverse();
        (grads_rev, delta)
    }

    pub fn batch_stats(&self, trace: &NetworkTrace) -> Vec<super::BatchStats> {
        trace
            .caches
            .iter()
            .filter_map(|c| match c {
                LayerCache::BatchNorm(cache) => cache.stats().cloned(),
                _ => None,
            })
            .collect()
    }

    pub fn dense_layer(&self, index: usize) -> Option<&DenseLayer> {
        match self.layers.get(index) {
            Some(Layer::Dense(d)) => Some(d),
            _ => None,
        }
    }
}

impl Parameterized for DenseNetwork {
    fn parameters(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => out.extend(d.params()),
                Layer::BatchNorm(bn) => out.extend(bn.params()),
                Layer::Dropout(_) => {}
            }
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => out.extend(d.params_mut()),
                Layer::BatchNorm(bn) => out.extend(bn.params_mut()),
                Layer::Dropout(_) => {}
            }
        }
        out
    }
}

impl Objective for DenseNetwork {
    type Input = Matrix;

    fn forward(&self, input: &Matrix, pass: Pass) -> Result<Forward> {
        let trace = self.forward_trace(input, pass, self.layers.len())?;
        let kinks = self.relu_pattern(&trace);
        Ok(Forward {
            probs: trace.activations.into_iter().last().expect("non-empty"),
            kinks,
        })
    }

    fn gradient(&self, input: &Matrix, labels: &[usize], weights: &ClassWeights, pass: Pass) -> Result<Step> {
        let trace = self.forward_trace(input, pass, self.layers.len())?;
        let (loss, d_probs) = weighted_cross_entropy_grad(trace.output(), labels, weights)?;
        let (grads, _) = self.backward(&trace, &d_probs);
        Ok(Step {
            loss,
            probs: trace.output().clone(),
            grads,
            batch_stats: self.batch_stats(&trace),
        })
    }

    fn apply_batch_stats(&mut self, stats: &[super::BatchStats]) {
        let mut it = stats.iter();
        for layer in &mut self.layers {
            if let Layer::BatchNorm(bn) = layer {
                if let Some(s) = it.next() {
                    bn.update_running(s);
                }
            }
        }
    }

    fn min_train_batch(&self) -> usize {
        if self.layers.iter().any(|l| matches!(l, Layer::BatchNorm(_))) {
            2
        } else {
            1
        }
    }
}
