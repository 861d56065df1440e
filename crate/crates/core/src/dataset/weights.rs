use super::EmotionLabel;
use crate::nn::ClassWeights;
use crate::{Error, Result, NUM_CLASSES};

/// Inverse-frequency weights `w_c = N / (K · n_c)` over the given labels.
pub fn compute_class_weights(labels: impl IntoIterator<Item = EmotionLabel>) -> Result<ClassWeights> {
    let mut counts = [0usize; NUM_CLASSES];
    for label in labels {
        counts[label.index()] += 1;
    }
    class_weights_from_counts(&counts)
}

pub fn class_weights_from_counts(counts: &[usize; NUM_CLASSES]) -> Result<ClassWeights> {
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::MissingClass(EmotionLabel::ALL[c]));
    }
    let total: usize = counts.iter().sum();
    let k = NUM_CLASSES as f64;
    let mut w = [0.0; NUM_CLASSES];
    for (wc, &n) in w.iter_mut().zip(counts) {
        *wc = total as f64 / (k * n as f64);
    }
    ClassWeights::new(w)
}
