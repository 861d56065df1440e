use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::{Error, Result, NUM_CLASSES};

/// Lower clip applied to probabilities before taking the log.
pub const PROB_CLIP: f64 = 1e-12;

/// One positive weight per emotion class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights([f64; NUM_CLASSES]);

impl ClassWeights {
    pub fn uniform() -> Self {
        Self([1.0; NUM_CLASSES])
    }

    pub fn new(weights: [f64; NUM_CLASSES]) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::config("class weight", format!("{w} must be finite and > 0")));
        }
        Ok(Self(weights))
    }

    pub fn as_array(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    #[inline]
    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }
}

impl Default for ClassWeights {
    fn default() -> Self {
        Self::uniform()
    }
}

fn check_inputs(probs: &Matrix, labels: &[usize]) -> Result<()> {
    if probs.rows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probs.rows(),
            right: labels.len(),
        });
    }
    if probs.rows() == 0 {
        return Err(Error::Empty);
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= probs.cols()) {
        return Err(Error::Label(bad));
    }
    Ok(())
}

/// `Σ_i w_{y_i}·(−ln p_{i,y_i}) / Σ_i w_{y_i}` with probabilities clipped to
/// `[1e-12, 1]`.
pub fn weighted_cross_entropy(probs: &Matrix, labels: &[usize], weights: &ClassWeights) -> Result<f64> {
    check_inputs(probs, labels)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let w = weights.get(y);
        num += w * -probs.get(i, y).clamp(PROB_CLIP, 1.0).ln();
        den += w;
    }
    Ok(num / den)
}

/// Loss together with `dL/dprobs`. The gradient is zero wherever the clip is
/// active, matching the clipped loss exactly.
pub fn weighted_cross_entropy_grad(
    probs: &Matrix,
    labels: &[usize],
    weights: &ClassWeights,
) -> Result<(f64, Matrix)> {
    let loss = weighted_cross_entropy(probs, labels, weights)?;
    let den: f64 = labels.iter().map(|&y| weights.get(y)).sum();
    let mut grad = Matrix::zeros(probs.rows(), probs.cols());
    for (i, &y) in labels.iter().enumerate() {
        let p = probs.get(i, y);
        if p > PROB_CLIP {
            grad.set(i, y, -weights.get(y) / (p.min(1.0) * den));
        }
    }
    Ok((loss, grad))
}

/// Whether each sample's probability sits at the clip boundary. Used as part
/// of the kink signature of the finite-difference oracle.
pub fn clip_flags(probs: &Matrix, labels: &[usize]) -> Vec<bool> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| probs.get(i, y) <= PROB_CLIP)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_have_zero_loss() {
        let mut probs = Matrix::zeros(3, 7);
        let labels = [0, 4, 6];
        for (i, &y) in labels.iter().enumerate() {
            probs.set(i, y, 1.0);
        }
        let w = ClassWeights::new([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).unwrap();
        assert!(weighted_cross_entropy(&probs, &labels, &w).unwrap() <= 1e-9);
    }

    #[test]
    fn uniform_predictions_cost_ln7() {
        let probs = Matrix::filled(5, 7, 1.0 / 7.0);
        let loss = weighted_cross_entropy(&probs, &[0, 1, 2, 3, 4], &ClassWeights::uniform()).unwrap();
        assert!((loss - 7f64.ln()).abs() < 1e-12);
        assert!((loss - 1.945910).abs() < 1e-6);
    }

    #[test]
    fn global_weight_scale_does_not_change_loss() {
        let probs = Matrix::from_vec(2, 7, vec![
            0.1, 0.2, 0.3, 0.1, 0.1, 0.1, 0.1, //
            0.4, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1,
        ])
        .unwrap();
        let a = weighted_cross_entropy(&probs, &[2, 0], &ClassWeights::uniform()).unwrap();
        let b = weighted_cross_entropy(&probs, &[2, 0], &ClassWeights::new([3.5; 7]).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn uniform_weights_equal_plain_mean() {
        let probs = Matrix::from_vec(3, 7, (0..21).map(|i| (i % 7 + 1) as f64 / 28.0).collect()).unwrap();
        let labels = [1, 5, 3];
        let plain = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -probs.get(i, y).ln())
            .sum::<f64>()
            / 3.0;
        let weighted = weighted_cross_entropy(&probs, &labels, &ClassWeights::uniform()).unwrap();
        assert_eq!(weighted, plain);
    }

    #[test]
    fn bad_label_is_rejected() {
        let probs = Matrix::filled(1, 7, 1.0 / 7.0);
        let err = weighted_cross_entropy(&probs, &[7], &ClassWeights::uniform()).unwrap_err();
        assert!(matches!(err, Error::Label(7)));
    }

    #[test]
    fn nonpositive_weights_are_rejected() {
        assert!(ClassWeights::new([1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0]).is_err());
    }
}
