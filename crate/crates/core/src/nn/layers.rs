use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{axpy, dot, Matrix};
use super::Pass;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Softmax,
    Sigmoid,
}

impl Activation {
    /// Applies the activation in place; softmax acts on each row.
    pub fn apply(self, z: &mut Matrix) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => z
                .as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = 1.0 / (1.0 + (-*v).exp())),
            Activation::Softmax => {
                for i in 0..z.rows() {
                    softmax_in_place(z.row_mut(i));
                }
            }
        }
    }

    /// Maps the gradient w.r.t. the activation output `y` back to the
    /// pre-activation.
    pub fn backward(self, y: &Matrix, dy: &Matrix) -> Matrix {
        match self {
            Activation::Identity => dy.clone(),
            Activation::Relu => {
                let mut dz = dy.clone();
                for (g, &out) in dz.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    if out <= 0.0 {
                        *g = 0.0;
                    }
                }
                dz
            }
            Activation::Sigmoid => {
                let mut dz = dy.clone();
                for (g, &out) in dz.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *g *= out * (1.0 - out);
                }
                dz
            }
            Activation::Softmax => softmax_backward(y, dy),
        }
    }
}

/// Numerically stable softmax (row max is subtracted before exponentiation).
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Row-wise softmax Jacobian-vector product: `dz = y ⊙ (dy − ⟨dy, y⟩)`.
pub fn softmax_backward(y: &Matrix, dy: &Matrix) -> Matrix {
    let mut dz = Matrix::zeros(y.rows(), y.cols());
    for i in 0..y.rows() {
        let (yr, gr) = (y.row(i), dy.row(i));
        let inner = dot(yr, gr);
        for ((d, &p), &g) in dz.row_mut(i).iter_mut().zip(yr).zip(gr) {
            *d = p * (g - inner);
        }
    }
    dz
}

/// Fully connected layer computing `activation(x · Wᵀ + b)` row-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `[out × in]`
    weights: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::shape("DenseLayer::new", "non-empty weights", "0 dimension"));
        }
        if bias.len() != weights.rows() {
            return Err(Error::shape("DenseLayer::new", weights.rows(), bias.len()));
        }
        if !weights.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::config("dense parameters", "non-finite value"));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weights: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let data = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            weights: Matrix::from_vec(outputs, inputs, data).expect("sized above"),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn params(&self) -> [&[f64]; 2] {
        [self.weights.as_slice(), &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weights.as_mut_slice(), &mut self.bias]
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }

    /// Pre-activation `x · Wᵀ + b`.
    pub fn linear(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.inputs() {
            return Err(Error::shape("dense input width", self.inputs(), x.cols()));
        }
        let mut z = Matrix::zeros(x.rows(), self.outputs());
        for i in 0..x.rows() {
            let xi = x.row(i);
            for (o, zo) in z.row_mut(i).iter_mut().enumerate() {
                *zo = dot(xi, self.weights.row(o)) + self.bias[o];
            }
        }
        Ok(z)
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = self.linear(x)?;
        self.activation.apply(&mut z);
        Ok(z)
    }

    /// Given the layer input `x`, its output `y` and `dL/dy`, returns the
    /// parameter gradients and `dL/dx`.
    pub fn backward(&self, x: &Matrix, y: &Matrix, dy: &Matrix) -> (DenseGrads, Matrix) {
        let dz = self.activation.backward(y, dy);
        self.backward_linear(x, &dz)
    }

    /// Backward pass from the pre-activation gradient.
    pub fn backward_linear(&self, x: &Matrix, dz: &Matrix) -> (DenseGrads, Matrix) {
        let mut dw = Matrix::zeros(self.outputs(), self.inputs());
        let mut db = vec![0.0; self.outputs()];
        let mut dx = Matrix::zeros(x.rows(), self.inputs());
        for i in 0..x.rows() {
            let xi = x.row(i);
            let dzi = dz.row(i);
            for (o, &g) in dzi.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                db[o] += g;
                axpy(g, xi, dw.row_mut(o));
                axpy(g, self.weights.row(o), dx.row_mut(i));
            }
        }
        (
            DenseGrads {
                weights: dw.into_vec(),
                bias: db,
            },
            dx,
        )
    }
}

/// Per-feature batch normalization with learned scale and shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormLayer {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Statistics of one training batch, folded into the running estimates by
/// [`BatchNormLayer::update_running`].
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
    stats: Option<BatchStats>,
}

impl BatchNormCache {
    pub fn stats(&self) -> Option<&BatchStats> {
        self.stats.as_ref()
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

pub const DEFAULT_BN_MOMENTUM: f64 = 0.99;
pub const DEFAULT_BN_EPSILON: f64 = 1e-5;

impl BatchNormLayer {
    pub fn new(dim: usize) -> Self {
        Self::with_options(dim, DEFAULT_BN_MOMENTUM, DEFAULT_BN_EPSILON)
            .expect("default options are valid")
    }

    pub fn with_options(dim: usize, momentum: f64, epsilon: f64) -> Result<Self> {
        if !(momentum > 0.0 && momentum < 1.0) {
            return Err(Error::config("batch norm momentum", format!("{momentum} not in (0,1)")));
        }
        if !(epsilon > 0.0) {
            return Err(Error::config("batch norm epsilon", format!("{epsilon} must be > 0")));
        }
        Ok(Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum,
            epsilon,
        })
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Matrix, pass: Pass) -> Result<(Matrix, BatchNormCache)> {
        let d = self.dim();
        if x.cols() != d {
            return Err(Error::shape("batch norm input width", d, x.cols()));
        }
        let n = x.rows();
        let (mean, var, stats) = if pass.is_train() {
            if n < 2 {
                return Err(Error::BatchTooSmall(n));
            }
            let mut mean = vec![0.0; d];
            for row in x.iter_rows() {
                axpy(1.0, row, &mut mean);
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            let mut var = vec![0.0; d];
            for row in x.iter_rows() {
                for ((v, &xv), &m) in var.iter_mut().zip(row).zip(&mean) {
                    *v += (xv - m) * (xv - m);
                }
            }
            var.iter_mut().for_each(|v| *v /= n as f64);
            let stats = BatchStats {
                mean: mean.clone(),
                var: var.clone(),
            };
            (mean, var, Some(stats))
        } else {
            (self.running_mean.clone(), self.running_var.clone(), None)
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let mut xhat = Matrix::zeros(n, d);
        let mut out = Matrix::zeros(n, d);
        for i in 0..n {
            let row = x.row(i);
            let xh = xhat.row_mut(i);
            let o = out.row_mut(i);
            for j in 0..d {
                xh[j] = (row[j] - mean[j]) * inv_std[j];
                o[j] = self.gamma[j] * xh[j] + self.beta[j];
            }
        }
        Ok((out, BatchNormCache { xhat, inv_std, stats }))
    }

    pub fn backward(&self, cache: &BatchNormCache, dy: &Matrix) -> (BatchNormGrads, Matrix) {
        let (n, d) = (dy.rows(), dy.cols());
        let mut dgamma = vec![0.0; d];
        let mut dbeta = vec![0.0; d];
        for i in 0..n {
            let (g, xh) = (dy.row(i), cache.xhat.row(i));
            for j in 0..d {
                dgamma[j] += g[j] * xh[j];
                dbeta[j] += g[j];
            }
        }
        let mut dx = Matrix::zeros(n, d);
        if cache.stats.is_some() {
            // Batch statistics depend on every row of the batch.
            let nf = n as f64;
            for i in 0..n {
                let (g, xh) = (dy.row(i), cache.xhat.row(i));
                for (j, out) in dx.row_mut(i).iter_mut().enumerate() {
                    let dxhat = g[j] * self.gamma[j];
                    let sum_dxhat = dbeta[j] * self.gamma[j];
                    let sum_dxhat_xhat = dgamma[j] * self.gamma[j];
                    *out = cache.inv_std[j] / nf * (nf * dxhat - sum_dxhat - xh[j] * sum_dxhat_xhat);
                }
            }
        } else {
            for i in 0..n {
                let g = dy.row(i);
                for (j, out) in dx.row_mut(i).iter_mut().enumerate() {
                    *out = g[j] * self.gamma[j] * cache.inv_std[j];
                }
            }
        }
        (
            BatchNormGrads {
                gamma: dgamma,
                beta: dbeta,
            },
            dx,
        )
    }

    /// `running ← momentum·running + (1 − momentum)·batch_stat`
    pub fn update_running(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for (r, &b) in self.running_mean.iter_mut().zip(&stats.mean) {
            *r = m * *r + (1.0 - m) * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(&stats.var) {
            *r = m * *r + (1.0 - m) * b;
        }
    }

    pub fn params(&self) -> [&[f64]; 2] {
        [&self.gamma, &self.beta]
    }

    pub fn params_mut(&mut self) -> [&mut [f64]; 2] {
        [&mut self.gamma, &mut self.beta]
    }
}

/// Inverted dropout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutLayer {
    rate: f64,
}

impl DropoutLayer {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config("dropout rate", format!("{rate} not in [0,1)")));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Draws the keep-mask for a `rows x cols` batch; kept entries carry the
    /// `1/(1−rate)` scale, dropped ones are zero. Depends only on the seed
    /// and the shape.
    pub fn mask(&self, rows: usize, cols: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (1.0 - self.rate);
        (0..rows * cols)
            .map(|_| {
                if rng.random::<f64>() >= self.rate {
                    scale
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Returns the output and, in train mode with a nonzero rate, the mask
    /// that the backward pass must reuse.
    pub fn forward(&self, x: &Matrix, pass: Pass) -> (Matrix, Option<Vec<f64>>) {
        match pass {
            Pass::Train { seed } if self.rate > 0.0 => {
                let mask = self.mask(x.rows(), x.cols(), seed);
                let mut out = x.clone();
                for (o, m) in out.as_mut_slice().iter_mut().zip(&mask) {
                    *o *= m;
                }
                (out, Some(mask))
            }
            _ => (x.clone(), None),
        }
    }

    pub fn backward(mask: Option<&[f64]>, dy: &Matrix) -> Matrix {
        let mut dx = dy.clone();
        if let Some(mask) = mask {
            for (g, m) in dx.as_mut_slice().iter_mut().zip(mask) {
                *g *= m;
            }
        }
        dx
    }
}
