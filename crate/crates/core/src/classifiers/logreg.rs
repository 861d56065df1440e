use serde::{Deserialize, Serialize};

use crate::nn::{
    weighted_cross_entropy_grad, Activation, ClassWeights, DenseLayer, Forward, Matrix, Objective, Parameterized,
    Pass, Step,
};
use crate::{Error, Result, FEA_DIM, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    /// Coefficient of `l2/2 · ‖W‖²`; the bias is not penalized.
    pub l2_strength: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self { l2_strength: 1e-4 }
    }
}

/// Multinomial logistic regression: one softmax layer over the raw input.
#[derive(Debug, Clone, PartialEq)]
pub struct LogReg {
    layer: DenseLayer,
    l2_strength: f64,
}

impl LogReg {
    /// Zero-initialized, so the initial prediction is uniform.
    pub fn new(config: &LogRegConfig) -> Result<Self> {
        Self::with_input_width(FEA_DIM, config)
    }

    pub fn with_input_width(inputs: usize, config: &LogRegConfig) -> Result<Self> {
        Self::from_layer(DenseLayer::zeros(inputs, NUM_CLASSES, Activation::Softmax), config.l2_strength)
    }

    pub fn from_layer(layer: DenseLayer, l2_strength: f64) -> Result<Self> {
        if !(l2_strength >= 0.0 && l2_strength.is_finite()) {
            return Err(Error::config("l2_strength", format!("{l2_strength} must be a finite value ≥ 0")));
        }
        if layer.activation() != Activation::Softmax || layer.outputs() != NUM_CLASSES {
            return Err(Error::ModelCorrupt("logistic regression needs a 7-unit softmax layer".into()));
        }
        Ok(Self { layer, l2_strength })
    }

    pub fn layer(&self) -> &DenseLayer {
        &self.layer
    }

    pub fn l2_strength(&self) -> f64 {
        self.l2_strength
    }

    pub fn input_width(&self) -> usize {
        self.layer.inputs()
    }
}

impl Parameterized for LogReg {
    fn parameters(&self) -> Vec<&[f64]> {
        self.layer.params().to_vec()
    }

    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.layer.params_mut().into_iter().collect()
    }
}

impl Objective for LogReg {
    type Input = Matrix;

    fn forward(&self, input: &Matrix, _pass: Pass) -> Result<Forward> {
        Ok(Forward {
            probs: self.layer.forward(input)?,
            kinks: Vec::new(),
        })
    }

    fn gradient(&self, input: &Matrix, labels: &[usize], weights: &ClassWeights, _pass: Pass) -> Result<Step> {
        let probs = self.layer.forward(input)?;
        let (ce, d_probs) = weighted_cross_entropy_grad(&probs, labels, weights)?;
        let (mut g, _) = self.layer.backward(input, &probs, &d_probs);
        for (gw, &w) in g.weights.iter_mut().zip(self.layer.weights().as_slice()) {
            *gw += self.l2_strength * w;
        }
        Ok(Step {
            loss: ce + self.penalty(),
            probs,
            grads: vec![g.weights, g.bias],
            batch_stats: Vec::new(),
        })
    }

    fn penalty(&self) -> f64 {
        let sq: f64 = self.layer.weights().as_slice().iter().map(|w| w * w).sum();
        0.5 * self.l2_strength * sq
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::{finite_difference_check, random_matrix, GradCheckOptions};

    #[test]
    fn starts_uniform() {
        let m = LogReg::new(&LogRegConfig::default()).unwrap();
        let p = m.predict_proba(&Matrix::filled(2, 63, 0.4)).unwrap();
        assert!(p.as_slice().iter().all(|&v| (v - 1.0 / 7.0).abs() < 1e-15));
        assert_eq!(m.parameter_count(), 63 * 7 + 7);
    }

    #[test]
    fn penalized_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = DenseLayer::glorot(63, 7, Activation::Softmax, &mut rng);
        let m = LogReg::from_layer(layer, 0.3).unwrap();
        let x = random_matrix(12, 63, &mut rng);
        let labels: Vec<usize> = (0..12).map(|i| i % 7).collect();
        let r = finite_difference_check(
            &m,
            &x,
            &labels,
            &ClassWeights::uniform(),
            Pass::Inference,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.max_relative_error <= 1e-6, "{r:?}");
        assert!(m.penalty() > 0.0);
    }

    #[test]
    fn negative_strength_is_rejected() {
        let err = LogReg::new(&LogRegConfig { l2_strength: -1.0 }).unwrap_err();
        assert!(err.to_string().contains("l2_strength"));
    }
}
