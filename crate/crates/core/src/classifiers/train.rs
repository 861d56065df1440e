use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_weights_from_counts, DatasetBundle, Split};
use crate::nn::{argmax_rows, derive_seed, AdamState, Batch, ClassWeights, Objective, Pass};
use crate::{Error, Result, NUM_CLASSES};

use super::{LogReg, LogRegConfig, Mlp, MlpConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub class_weighting: bool,
    pub shuffle: bool,
    /// Stop after this many epochs without a val-accuracy improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-3,
            max_epochs: 200,
            seed: 0,
            class_weighting: true,
            shuffle: true,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::config("batch_size", "must be ≥ 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", format!("{} must be > 0", self.learning_rate)));
        }
        if self.max_epochs < 1 {
            return Err(Error::config("max_epochs", "must be ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// Epoch whose parameters were returned; `None` when nothing was trained.
    pub selected_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.val_accuracy.len()
    }

    pub fn best_val_accuracy(&self) -> Option<f64> {
        self.selected_epoch.map(|e| self.val_accuracy[e])
    }
}

/// A labelled split ready for training.
#[derive(Debug, Clone)]
pub struct LabeledBatch<I> {
    pub input: I,
    pub labels: Vec<usize>,
}

impl<I: Batch> LabeledBatch<I> {
    pub fn new(input: I, labels: Vec<usize>) -> Result<Self> {
        if input.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: input.len(),
                right: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&c| c >= NUM_CLASSES) {
            return Err(Error::Label(bad));
        }
        Ok(Self { input, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let correct = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    correct as f64 / labels.len() as f64
}

/// Splits `0..n` (in `order`) into batches of `batch_size`, folding a short
/// trailing batch into its predecessor when it is smaller than `min_batch`.
pub fn batch_indices(order: &[usize], batch_size: usize, min_batch: usize) -> Vec<Vec<usize>> {
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    if batches.len() >= 2 && batches.last().is_some_and(|b| b.len() < min_batch) {
        let tail = batches.pop().expect("len ≥ 2");
        batches.last_mut().expect("len ≥ 1").extend(tail);
    }
    batches
}

fn weights_for(train: &LabeledBatch<impl Batch>, config: &TrainConfig) -> Result<ClassWeights> {
    if config.class_weighting {
        class_weights_from_counts(&train.class_counts())
    } else {
        Ok(ClassWeights::uniform())
    }
}

/// Mini-batch Adam on weighted cross-entropy. Parameters are snapshotted
/// whenever val accuracy strictly improves and the best snapshot is
/// returned. Once val accuracy reaches 1 no later epoch can be selected, so
/// training stops there.
pub fn fit<M: Objective>(
    mut model: M,
    train: &LabeledBatch<M::Input>,
    val: &LabeledBatch<M::Input>,
    config: &TrainConfig,
) -> Result<(M, TrainHistory)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySplit(Split::Train));
    }
    if val.is_empty() {
        return Err(Error::EmptySplit(Split::Val));
    }
    if train.len() < model.min_train_batch() {
        return Err(Error::BatchTooSmall(train.len()));
    }
    let weights = weights_for(train, config)?;
    let mut adam = AdamState::new(&model.parameter_shapes(), config.learning_rate)?;
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, M)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..config.max_epochs {
        let epoch_seed = derive_seed(config.seed, epoch as u64);
        if config.shuffle {
            order.sort_unstable();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
        }
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, idx) in batch_indices(&order, config.batch_size, model.min_train_batch()).iter().enumerate() {
            let input = train.input.select(idx);
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let pass = Pass::Train {
                seed: derive_seed(epoch_seed, b as u64),
            };
            let step = model.gradient(&input, &labels, &weights, pass)?;
            if !step.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            adam.step(model.parameters_mut(), &step.grads)?;
            model.apply_batch_stats(&step.batch_stats);
            loss_sum += step.loss * idx.len() as f64;
            correct += argmax_rows(&step.probs)
                .iter()
                .zip(&labels)
                .filter(|(p, y)| p == y)
                .count();
        }
        history.train_loss.push(loss_sum / train.len() as f64);
        history.train_accuracy.push(correct as f64 / train.len() as f64);

        let val_acc = accuracy(&argmax_rows(&model.predict_proba(&val.input)?), &val.labels);
        history.val_accuracy.push(val_acc);
        if best.as_ref().is_none_or(|(acc, _)| val_acc > *acc) {
            best = Some((val_acc, model.clone()));
            history.selected_epoch = Some(epoch);
        }
        if val_acc >= 1.0 {
            break;
        }
        if let (Some(p), Some(sel)) = (config.patience, history.selected_epoch) {
            if epoch - sel >= p {
                break;
            }
        }
    }
    let (_, model) = best.expect("at least one epoch ran");
    Ok((model, history))
}

fn fea_split(bundle: &DatasetBundle, split: Split) -> Result<LabeledBatch<crate::nn::Matrix>> {
    let (x, y) = bundle.split_arrays(split);
    LabeledBatch::new(x, y)
}

pub fn train_mlp(
    bundle: &DatasetBundle,
    mlp_config: &MlpConfig,
    config: &TrainConfig,
) -> Result<(Mlp, TrainHistory)> {
    let train = fea_split(bundle, Split::Train)?;
    let val = fea_split(bundle, Split::Val)?;
    fit(Mlp::new(mlp_config, config.seed)?, &train, &val, config)
}

pub fn train_logreg(
    bundle: &DatasetBundle,
    logreg_config: &LogRegConfig,
    config: &TrainConfig,
) -> Result<(LogReg, TrainHistory)> {
    let train = fea_split(bundle, Split::Train)?;
    let val = fea_split(bundle, Split::Val)?;
    fit(LogReg::new(logreg_config)?, &train, &val, config)
}
