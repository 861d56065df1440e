use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{
    Activation, ClassWeights, DenseLayer, DenseNetwork, DropoutLayer, Forward, Layer, Matrix, Objective,
    Parameterized, Pass, Step,
};
use crate::{Error, Result, FEA_DIM, NUM_CLASSES};

/// Parameter count of the default 63→128→64→7 architecture.
pub const DEFAULT_MLP_PARAMETERS: usize = 63 * 128 + 128 + 128 * 64 + 64 + 64 * 7 + 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden_units: Vec<usize>,
    /// Dropout after each hidden layer; same length as `hidden_units`.
    pub dropout_rates: Vec<f64>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_units: vec![128, 64],
            dropout_rates: vec![0.2, 0.2],
        }
    }
}

/// ReLU hidden layers, each followed by dropout, and a softmax output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    net: DenseNetwork,
}

impl Mlp {
    pub fn new(config: &MlpConfig, seed: u64) -> Result<Self> {
        Self::with_input_width(FEA_DIM, config, seed)
    }

    pub fn with_input_width(inputs: usize, config: &MlpConfig, seed: u64) -> Result<Self> {
        if config.hidden_units.is_empty() {
            return Err(Error::config("hidden_units", "needs at least one hidden layer"));
        }
        if config.dropout_rates.len() != config.hidden_units.len() {
            return Err(Error::config(
                "dropout_rates",
                format!("{} rates for {} hidden layers", config.dropout_rates.len(), config.hidden_units.len()),
            ));
        }
        if let Some(0) = config.hidden_units.iter().copied().find(|&u| u == 0) {
            return Err(Error::config("hidden_units", "layer widths must be ≥ 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut width = inputs;
        for (&units, &rate) in config.hidden_units.iter().zip(&config.dropout_rates) {
            layers.push(Layer::Dense(DenseLayer::glorot(width, units, Activation::Relu, &mut rng)));
            layers.push(Layer::Dropout(DropoutLayer::new(rate)?));
            width = units;
        }
        layers.push(Layer::Dense(DenseLayer::glorot(width, NUM_CLASSES, Activation::Softmax, &mut rng)));
        Ok(Self {
            net: DenseNetwork::new(layers)?,
        })
    }

    /// Wraps a network, checking that it starts with a ReLU dense layer and
    /// ends in a 7-way softmax.
    pub fn from_network(net: DenseNetwork) -> Result<Self> {
        let first_ok = matches!(net.layers().first(), Some(Layer::Dense(d)) if d.activation() == Activation::Relu);
        let last_ok = matches!(
            net.layers().last(),
            Some(Layer::Dense(d)) if d.activation() == Activation::Softmax && d.outputs() == NUM_CLASSES
        );
        if !first_ok || !last_ok {
            return Err(Error::ModelCorrupt(
                "an MLP starts with a relu dense layer and ends in a 7-unit softmax".into(),
            ));
        }
        Ok(Self { net })
    }

    pub fn network(&self) -> &DenseNetwork {
        &self.net
    }

    pub fn input_width(&self) -> usize {
        self.net.input_width()
    }

    /// Width of the first hidden layer, i.e. of [`Mlp::extract_features`].
    pub fn feature_width(&self) -> usize {
        self.net.dense_layer(0).expect("checked on construction").outputs()
    }

    /// Post-ReLU output of the first dense layer, at inference.
    pub fn extract_features(&self, x: &Matrix) -> Result<Matrix> {
        let trace = self.net.forward_trace(x, Pass::Inference, 1)?;
        Ok(trace.output().clone())
    }
}

impl Parameterized for Mlp {
    fn parameters(&self) -> Vec<&[f64]> {
        self.net.parameters()
    }

    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.parameters_mut()
    }
}

impl Objective for Mlp {
    type Input = Matrix;

    fn forward(&self, input: &Matrix, pass: Pass) -> Result<Forward> {
        Objective::forward(&self.net, input, pass)
    }

    fn gradient(&self, input: &Matrix, labels: &[usize], weights: &ClassWeights, pass: Pass) -> Result<Step> {
        Objective::gradient(&self.net, input, labels, weights, pass)
    }
}
