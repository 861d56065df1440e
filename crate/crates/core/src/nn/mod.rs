//! Minimal dense-network engine: layers with hand-derived backward passes,
//! weighted cross-entropy, Adam and a finite-difference gradient oracle.
//!
//! Every architecture in the crate (the MLP, logistic regression and the
//! fusion heads) implements [`Objective`], which is all the trainer and the
//! gradient checker need.

mod adam;
mod gradcheck;
mod layers;
mod loss;
mod matrix;
mod network;

pub use adam::AdamState;
pub use gradcheck::{
    check_gradient, finite_difference_check, random_matrix, relative_error, GradCheckOptions,
    GradCheckReport,
};
pub use layers::{
    softmax, softmax_backward, softmax_in_place, Activation, BatchNormCache, BatchNormGrads,
    BatchNormLayer, BatchStats, DenseGrads, DenseLayer, DropoutLayer, DEFAULT_BN_EPSILON,
    DEFAULT_BN_MOMENTUM,
};
pub use loss::{clip_flags, weighted_cross_entropy, weighted_cross_entropy_grad, ClassWeights, PROB_CLIP};
pub use matrix::{axpy, dot, Matrix};
pub use network::{DenseNetwork, Layer, NetworkTrace};

use crate::Result;

/// Forward-pass mode. Train mode samples dropout masks from `seed` and
/// normalizes with batch statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Inference,
    Train { seed: u64 },
}

impl Pass {
    pub fn is_train(self) -> bool {
        matches!(self, Pass::Train { .. })
    }

    /// Seed for the `stream`-th stochastic component of this pass.
    pub fn substream(self, stream: u64) -> Pass {
        match self {
            Pass::Inference => Pass::Inference,
            Pass::Train { seed } => Pass::Train {
                seed: derive_seed(seed, stream),
            },
        }
    }
}

/// SplitMix64-style mixing of a base seed with a stream index.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A model with a fixed, ordered list of trainable tensors.
pub trait Parameterized {
    fn parameters(&self) -> Vec<&[f64]>;
    fn parameters_mut(&mut self) -> Vec<&mut [f64]>;

    fn parameter_shapes(&self) -> Vec<usize> {
        self.parameters().iter().map(|p| p.len()).collect()
    }

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }
}

/// Row-indexable model input.
pub trait Batch: Clone + Send + Sync {
    fn len(&self) -> usize;
    fn select(&self, indices: &[usize]) -> Self;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Batch for Matrix {
    fn len(&self) -> usize {
        self.rows()
    }

    fn select(&self, indices: &[usize]) -> Self {
        self.select_rows(indices)
    }
}

/// Class probabilities plus the on/off pattern of every piecewise-linear
/// unit that produced them.
#[derive(Debug, Clone)]
pub struct Forward {
    pub probs: Matrix,
    pub kinks: Vec<bool>,
}

/// Result of a differentiated training pass.
#[derive(Debug, Clone)]
pub struct Step {
    pub loss: f64,
    pub probs: Matrix,
    /// One gradient per tensor, in [`Parameterized::parameters`] order.
    pub grads: Vec<Vec<f64>>,
    pub batch_stats: Vec<BatchStats>,
}

/// A classifier trained by minimizing weighted cross-entropy (plus an
/// optional penalty) over its parameters.
pub trait Objective: Parameterized + Clone + Send + Sync {
    type Input: Batch;

    fn forward(&self, input: &Self::Input, pass: Pass) -> Result<Forward>;

    /// Loss and exact analytic gradients. Must use the same dropout masks as
    /// [`Objective::forward`] for an identical `pass`.
    fn gradient(
        &self,
        input: &Self::Input,
        labels: &[usize],
        weights: &ClassWeights,
        pass: Pass,
    ) -> Result<Step>;

    /// Additive regularization term of the objective.
    fn penalty(&self) -> f64 {
        0.0
    }

    fn loss(
        &self,
        input: &Self::Input,
        labels: &[usize],
        weights: &ClassWeights,
        pass: Pass,
    ) -> Result<(f64, Vec<bool>)> {
        let fwd = self.forward(input, pass)?;
        let loss = weighted_cross_entropy(&fwd.probs, labels, weights)? + self.penalty();
        let mut kinks = fwd.kinks;
        kinks.extend(clip_flags(&fwd.probs, labels));
        Ok((loss, kinks))
    }

    fn predict_proba(&self, input: &Self::Input) -> Result<Matrix> {
        Ok(self.forward(input, Pass::Inference)?.probs)
    }

    /// Folds batch statistics from a training step into running estimates.
    fn apply_batch_stats(&mut self, _stats: &[BatchStats]) {}

    /// Smallest batch a training pass accepts.
    fn min_train_batch(&self) -> usize {
        1
    }
}

/// Row-wise argmax, lowest index on ties.
pub fn argmax_rows(probs: &Matrix) -> Vec<usize> {
    probs.iter_rows().map(argmax).collect()
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
