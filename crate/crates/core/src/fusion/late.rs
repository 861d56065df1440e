use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{
    softmax, weighted_cross_entropy_grad, Activation, Batch, ClassWeights, DenseLayer, Forward, Matrix, Objective,
    Parameterized, Pass, Step,
};
use crate::{Error, Result, NUM_CLASSES};

/// Row-sum tolerance for probability inputs.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LateStrategy {
    Average,
    WeightedSum,
    ConcatDense,
    Bilinear,
    CrossAttention,
}

impl LateStrategy {
    pub const ALL: [LateStrategy; 5] = [
        LateStrategy::Average,
        LateStrategy::WeightedSum,
        LateStrategy::ConcatDense,
        LateStrategy::Bilinear,
        LateStrategy::CrossAttention,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LateStrategy::Average => "average",
            LateStrategy::WeightedSum => "weighted_sum",
            LateStrategy::ConcatDense => "concat_dense",
            LateStrategy::Bilinear => "bilinear",
            LateStrategy::CrossAttention => "cross_attention",
        }
    }
}

impl fmt::Display for LateStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LateStrategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        LateStrategy::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown fusion strategy `{s}`"))
    }
}

fn check_simplex(m: &Matrix) -> Result<()> {
    if m.cols() != NUM_CLASSES {
        return Err(Error::shape("probability rows", NUM_CLASSES, m.cols()));
    }
    for (row, r) in m.iter_rows().enumerate() {
        let sum: f64 = r.iter().sum();
        if r.iter().any(|&v| !(v >= 0.0)) || !((sum - 1.0).abs() <= SIMPLEX_TOLERANCE) {
            return Err(Error::NotSimplex { row, sum });
        }
    }
    Ok(())
}

/// Paired FEA and image probability vectors, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LatePair {
    p_fea: Matrix,
    p_img: Matrix,
}

impl LatePair {
    pub fn new(p_fea: Matrix, p_img: Matrix) -> Result<Self> {
        if p_fea.rows() != p_img.rows() {
            return Err(Error::LengthMismatch {
                left: p_fea.rows(),
                right: p_img.rows(),
            });
        }
        check_simplex(&p_fea)?;
        check_simplex(&p_img)?;
        Ok(Self { p_fea, p_img })
    }

    pub fn p_fea(&self) -> &Matrix {
        &self.p_fea
    }

    pub fn p_img(&self) -> &Matrix {
        &self.p_img
    }
}

impl Batch for LatePair {
    fn len(&self) -> usize {
        self.p_fea.rows()
    }

    fn select(&self, indices: &[usize]) -> Self {
        Self {
            p_fea: self.p_fea.select_rows(indices),
            p_img: self.p_img.select_rows(indices),
        }
    }
}

/// Elementwise mean of two probability vectors.
pub fn fuse_average(p_fea: &[f64], p_img: &[f64]) -> Vec<f64> {
    p_fea.iter().zip(p_img).map(|(a, b)| 0.5 * (a + b)).collect()
}

/// Flattened outer products `p_fea · p_imgᵀ`, entry `7i + j` = `p_fea[i]·p_img[j]`.
pub fn bilinear_features(p_fea: &Matrix, p_img: &Matrix) -> Matrix {
    let k = NUM_CLASSES;
    let mut out = Matrix::zeros(p_fea.rows(), k * k);
    for r in 0..p_fea.rows() {
        let (f, g) = (p_fea.row(r), p_img.row(r));
        let dst = out.row_mut(r);
        for i in 0..k {
            for j in 0..k {
                dst[k * i + j] = f[i] * g[j];
            }
        }
    }
    out
}

/// Decision-level fusion of the two modalities' class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub enum LateFusionModel {
    Average,
    /// Two logits; `softmax(logits)` gives the convex weights of FEA and image.
    WeightedSum { logits: Vec<f64> },
    /// Softmax dense layer over `[p_fea ‖ p_img]`.
    ConcatDense(DenseLayer),
    /// Softmax dense layer over [`bilinear_features`].
    Bilinear(DenseLayer),
    /// `a = A(p_img)`, `b = B(p_fea)`, output `(a⊙p_fea + b⊙p_img) / Σ`.
    CrossAttention { attn_a: DenseLayer, attn_b: DenseLayer },
}

impl LateFusionModel {
    /// Zero-initialized model. Every trainable strategy starts from a
    /// parameter-independent output; cross-attention starts equal to average
    /// fusion.
    pub fn new(strategy: LateStrategy) -> Self {
        let k = NUM_CLASSES;
        match strategy {
            LateStrategy::Average => LateFusionModel::Average,
            LateStrategy::WeightedSum => LateFusionModel::WeightedSum { logits: vec![0.0; 2] },
            LateStrategy::ConcatDense => LateFusionModel::ConcatDense(DenseLayer::zeros(2 * k, k, Activation::Softmax)),
            LateStrategy::Bilinear => LateFusionModel::Bilinear(DenseLayer::zeros(k * k, k, Activation::Softmax)),
            LateStrategy::CrossAttention => LateFusionModel::CrossAttention {
                attn_a: DenseLayer::zeros(k, k, Activation::Softmax),
                attn_b: DenseLayer::zeros(k, k, Activation::Softmax),
            },
        }
    }

    /// Glorot-initialized weights and small random biases; weighted-sum
    /// logits drawn from `[-1, 1]`.
    pub fn random(strategy: LateStrategy, seed: u64) -> Self {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = NUM_CLASSES;
        let dense = |i: usize, rng: &mut ChaCha8Rng| {
            let mut d = DenseLayer::glorot(i, k, Activation::Softmax, rng);
            d.params_mut()[1].iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
            d
        };
        match strategy {
            LateStrategy::Average => LateFusionModel::Average,
            LateStrategy::WeightedSum => LateFusionModel::WeightedSum {
                logits: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            },
            LateStrategy::ConcatDense => LateFusionModel::ConcatDense(dense(2 * k, &mut rng)),
            LateStrategy::Bilinear => LateFusionModel::Bilinear(dense(k * k, &mut rng)),
            LateStrategy::CrossAttention => LateFusionModel::CrossAttention {
                attn_a: dense(k, &mut rng),
                attn_b: dense(k, &mut rng),
            },
        }
    }

    pub fn strategy(&self) -> LateStrategy {
        match self {
            LateFusionModel::Average => LateStrategy::Average,
            LateFusionModel::WeightedSum { .. } => LateStrategy::WeightedSum,
            LateFusionModel::ConcatDense(_) => LateStrategy::ConcatDense,
            LateFusionModel::Bilinear(_) => LateStrategy::Bilinear,
            LateFusionModel::CrossAttention { .. } => LateStrategy::CrossAttention,
        }
    }

    /// Convex weights `(α, β)` of the weighted-sum strategy.
    pub fn mixing_weights(&self) -> Option<(f64, f64)> {
        match self {
            LateFusionModel::WeightedSum { logits } => {
                let s = softmax(logits);
                Some((s[0], s[1]))
            }
            _ => None,
        }
    }

    fn check_input(&self, input: &LatePair) -> Result<()> {
        if input.is_empty() {
            return Err(Error::Empty);
        }
        Ok(())
    }

    fn run(&self, input: &LatePair) -> Result<(Matrix, Option<Trace>)> {
        self.check_input(input)?;
        let (f, g) = (&input.p_fea, &input.p_img);
        Ok(match self {
            LateFusionModel::Average => {
                let mut out = f.add(g)?;
                out.as_mut_slice().iter_mut().for_each(|v| *v *= 0.5);
                (out, None)
            }
            LateFusionModel::WeightedSum { logits } => {
                let s = softmax(logits);
                let mut out = f.clone();
                for (o, &gv) in out.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *o = s[0] * *o + s[1] * gv;
                }
                (out, Some(Trace::Mix(s)))
            }
            LateFusionModel::ConcatDense(d) => {
                let x = f.hconcat(g)?;
                let out = d.forward(&x)?;
                (out, Some(Trace::Input(x)))
            }
            LateFusionModel::Bilinear(d) => {
                let x = bilinear_features(f, g);
                let out = d.forward(&x)?;
                (out, Some(Trace::Input(x)))
            }
            LateFusionModel::CrossAttention { attn_a, attn_b } => {
                let a = attn_a.forward(g)?;
                let b = attn_b.forward(f)?;
                let raw = a.hadamard(f)?.add(&b.hadamard(g)?)?;
                let sums: Vec<f64> = raw.iter_rows().map(|r| r.iter().sum()).collect();
                let mut out = raw;
                for (i, &s) in sums.iter().enumerate() {
                    out.row_mut(i).iter_mut().for_each(|v| *v /= s);
                }
                (out, Some(Trace::Attention { a, b, sums }))
            }
        })
    }
}

enum Trace {
    Mix(Vec<f64>),
    Input(Matrix),
    Attention { a: Matrix, b: Matrix, sums: Vec<f64> },
}

impl Parameterized for LateFusionModel {
    fn parameters(&self) -> Vec<&[f64]> {
        match self {
            LateFusionModel::Average => Vec::new(),
            LateFusionModel::WeightedSum { logits } => vec![logits.as_slice()],
            LateFusionModel::ConcatDense(d) | LateFusionModel::Bilinear(d) => d.params().to_vec(),
            LateFusionModel::CrossAttention { attn_a, attn_b } => {
                let mut p = attn_a.params().to_vec();
                p.extend(attn_b.params());
                p
            }
        }
    }

    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            LateFusionModel::Average => Vec::new(),
            LateFusionModel::WeightedSum { logits } => vec![logits.as_mut_slice()],
            LateFusionModel::ConcatDense(d) | LateFusionModel::Bilinear(d) => d.params_mut().into_iter().collect(),
            LateFusionModel::CrossAttention { attn_a, attn_b } => {
                let mut p: Vec<&mut [f64]> = attn_a.params_mut().into_iter().collect();
                p.extend(attn_b.params_mut());
                p
            }
        }
    }
}

impl Objective for LateFusionModel {
    type Input = LatePair;

    fn forward(&self, input: &LatePair, _pass: Pass) -> Result<Forward> {
        Ok(Forward {
            probs: self.run(input)?.0,
            kinks: Vec::new(),
        })
    }

    fn gradient(&self, input: &LatePair, labels: &[usize], weights: &ClassWeights, _pass: Pass) -> Result<Step> {
        let (out, trace) = self.run(input)?;
        let (loss, d_out) = weighted_cross_entropy_grad(&out, labels, weights)?;
        let (f, g) = (&input.p_fea, &input.p_img);
        let grads = match (self, trace) {
            (LateFusionModel::Average, _) => Vec::new(),
            (LateFusionModel::WeightedSum { .. }, Some(Trace::Mix(s))) => {
                let d_alpha = crate::nn::dot(d_out.as_slice(), f.as_slice());
                let d_beta = crate::nn::dot(d_out.as_slice(), g.as_slice());
                let inner = s[0] * d_alpha + s[1] * d_beta;
                vec![vec![s[0] * (d_alpha - inner), s[1] * (d_beta - inner)]]
            }
            (LateFusionModel::ConcatDense(d) | LateFusionModel::Bilinear(d), Some(Trace::Input(x))) => {
                let (gd, _) = d.backward(&x, &out, &d_out);
                vec![gd.weights, gd.bias]
            }
            (LateFusionModel::CrossAttention { attn_a, attn_b }, Some(Trace::Attention { a, b, sums })) => {
                // out = raw / S  ⇒  d raw_k = (d out_k − ⟨d out, out⟩) / S
                let mut d_raw = d_out.clone();
                for (i, &s) in sums.iter().enumerate() {
                    let inner = crate::nn::dot(d_out.row(i), out.row(i));
                    d_raw.row_mut(i).iter_mut().for_each(|v| *v = (*v - inner) / s);
                }
                let d_a = d_raw.hadamard(f)?;
                let d_b = d_raw.hadamard(g)?;
                let (ga, _) = attn_a.backward(g, &a, &d_a);
                let (gb, _) = attn_b.backward(f, &b, &d_b);
                vec![ga.weights, ga.bias, gb.weights, gb.bias]
            }
            _ => unreachable!("trace kind follows strategy"),
        };
        Ok(Step {
            loss,
            probs: out,
            grads,
            batch_stats: Vec::new(),
        })
    }
}
