use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{
    weighted_cross_entropy_grad, Activation, Batch, BatchNormLayer, BatchStats, ClassWeights, DenseLayer,
    DropoutLayer, Forward, Matrix, Objective, Parameterized, Pass, Step,
};
use crate::{Error, Result, IMAGE_FEATURE_DIM, NUM_CLASSES};

/// Normalization of the cross-attention gates over the projected features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateActivation {
    Softmax,
    Sigmoid,
}

impl GateActivation {
    fn activation(self) -> Activation {
        match self {
            GateActivation::Softmax => Activation::Softmax,
            GateActivation::Sigmoid => Activation::Sigmoid,
        }
    }
}

impl fmt::Display for GateActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateActivation::Softmax => "softmax",
            GateActivation::Sigmoid => "sigmoid",
        })
    }
}

impl FromStr for GateActivation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "softmax" => Ok(GateActivation::Softmax),
            "sigmoid" => Ok(GateActivation::Sigmoid),
            _ => Err(format!("unknown gate activation `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntermediateConfig {
    pub projection_width: usize,
    pub gate: GateActivation,
    pub dropout: f64,
}

impl Default for IntermediateConfig {
    fn default() -> Self {
        Self {
            projection_width: 512,
            gate: GateActivation::Softmax,
            dropout: 0.4,
        }
    }
}

/// Per-sample FEA features (from a frozen MLP) and pooled image features.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionFeatures {
    fea: Matrix,
    img: Matrix,
}

impl FusionFeatures {
    pub fn new(fea: Matrix, img: Matrix) -> Result<Self> {
        if fea.rows() != img.rows() {
            return Err(Error::LengthMismatch {
                left: fea.rows(),
                right: img.rows(),
            });
        }
        Ok(Self { fea, img })
    }

    pub fn fea(&self) -> &Matrix {
        &self.fea
    }

    pub fn img(&self) -> &Matrix {
        &self.img
    }
}

impl Batch for FusionFeatures {
    fn len(&self) -> usize {
        self.fea.rows()
    }

    fn select(&self, indices: &[usize]) -> Self {
        Self {
            fea: self.fea.select_rows(indices),
            img: self.img.select_rows(indices),
        }
    }
}

/// Feature-level fusion:
///
/// ```text
/// h_f = BN(P_fea · f)        h_i = BN(P_img · g)
/// a   = gate(A · h_i)        b   = gate(B · h_f)
/// out = softmax(Head(Dropout([a⊙h_f ‖ b⊙h_i])))
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct IntermediateFusionModel {
    pub proj_fea: DenseLayer,
    pub bn_fea: BatchNormLayer,
    pub proj_img: DenseLayer,
    pub bn_img: BatchNormLayer,
    pub attn_a: DenseLayer,
    pub attn_b: DenseLayer,
    pub dropout: DropoutLayer,
    pub head: DenseLayer,
}

struct Trace {
    f_proj: Matrix,
    g_proj: Matrix,
    bn_f: crate::nn::BatchNormCache,
    bn_i: crate::nn::BatchNormCache,
    h_f: Matrix,
    h_i: Matrix,
    a: Matrix,
    b: Matrix,
    mask: Option<Vec<f64>>,
    z_drop: Matrix,
    out: Matrix,
}

impl IntermediateFusionModel {
    pub fn new(fea_width: usize, img_width: usize, config: &IntermediateConfig, seed: u64) -> Result<Self> {
        let w = config.projection_width;
        if w == 0 {
            return Err(Error::config("projection_width", "must be ≥ 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gate = config.gate.activation();
        let model = Self {
            proj_fea: DenseLayer::glorot(fea_width, w, Activation::Identity, &mut rng),
            bn_fea: BatchNormLayer::new(w),
            proj_img: DenseLayer::glorot(img_width, w, Activation::Identity, &mut rng),
            bn_img: BatchNormLayer::new(w),
            attn_a: DenseLayer::glorot(w, w, gate, &mut rng),
            attn_b: DenseLayer::glorot(w, w, gate, &mut rng),
            dropout: DropoutLayer::new(config.dropout)?,
            head: DenseLayer::glorot(2 * w, NUM_CLASSES, Activation::Softmax, &mut rng),
        };
        model.validate()?;
        Ok(model)
    }

    /// Default model over 128-dim MLP features and 1280-dim image features.
    pub fn with_defaults(fea_width: usize, config: &IntermediateConfig, seed: u64) -> Result<Self> {
        Self::new(fea_width, IMAGE_FEATURE_DIM, config, seed)
    }

    /// Checks the shape chain and that both gates share one activation.
    pub fn validate(&self) -> Result<()> {
        let w = self.proj_fea.outputs();
        let bad = |what: &str| Err(Error::ModelCorrupt(format!("intermediate fusion: {what}")));
        if self.proj_img.outputs() != w || self.bn_fea.dim() != w || self.bn_img.dim() != w {
            return bad("projection widths differ");
        }
        for d in [&self.attn_a, &self.attn_b] {
            if d.inputs() != w || d.outputs() != w {
                return bad("attention layers must be width × width");
            }
            if !matches!(d.activation(), Activation::Softmax | Activation::Sigmoid) {
                return bad("attention gates use softmax or sigmoid");
            }
        }
        if self.attn_a.activation() != self.attn_b.activation() {
            return bad("attention gates disagree");
        }
        if self.head.inputs() != 2 * w || self.head.outputs() != NUM_CLASSES || self.head.activation() != Activation::Softmax
        {
            return bad("head must map 2 × width to a 7-way softmax");
        }
        if self.proj_fea.activation() != Activation::Identity || self.proj_img.activation() != Activation::Identity {
            return bad("projections are linear");
        }
        Ok(())
    }

    pub fn projection_width(&self) -> usize {
        self.proj_fea.outputs()
    }

    pub fn fea_width(&self) -> usize {
        self.proj_fea.inputs()
    }

    pub fn img_width(&self) -> usize {
        self.proj_img.inputs()
    }

    pub fn gate(&self) -> GateActivation {
        match self.attn_a.activation() {
            Activation::Sigmoid => GateActivation::Sigmoid,
            _ => GateActivation::Softmax,
        }
    }

    fn run(&self, input: &FusionFeatures, pass: Pass) -> Result<Trace> {
        if input.is_empty() {
            return Err(Error::Empty);
        }
        let f_proj = self.proj_fea.forward(&input.fea)?;
        let g_proj = self.proj_img.forward(&input.img)?;
        let (h_f, bn_f) = self.bn_fea.forward(&f_proj, pass)?;
        let (h_i, bn_i) = self.bn_img.forward(&g_proj, pass)?;
        let a = self.attn_a.forward(&h_i)?;
        let b = self.attn_b.forward(&h_f)?;
        let z = a.hadamard(&h_f)?.hconcat(&b.hadamard(&h_i)?)?;
        let (z_drop, mask) = self.dropout.forward(&z, pass.substream(0));
        let out = self.head.forward(&z_drop)?;
        Ok(Trace {
            f_proj,
            g_proj,
            bn_f,
            bn_i,
            h_f,
            h_i,
            a,
            b,
            mask,
            z_drop,
            out,
        })
    }
}

impl Parameterized for IntermediateFusionModel {
    fn parameters(&self) -> Vec<&[f64]> {
        let mut p = Vec::with_capacity(14);
        p.extend(self.proj_fea.params());
        p.extend(self.bn_fea.params());
        p.extend(self.proj_img.params());
        p.extend(self.bn_img.params());
        p.extend(self.attn_a.params());
        p.extend(self.attn_b.params());
        p.extend(self.head.params());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = Vec::with_capacity(14);
        p.extend(self.proj_fea.params_mut());
        p.extend(self.bn_fea.params_mut());
        p.extend(self.proj_img.params_mut());
        p.extend(self.bn_img.params_mut());
        p.extend(self.attn_a.params_mut());
        p.extend(self.attn_b.params_mut());
        p.extend(self.head.params_mut());
        p
    }
}

impl Objective for IntermediateFusionModel {
    type Input = FusionFeatures;

    fn forward(&self, input: &FusionFeatures, pass: Pass) -> Result<Forward> {
        Ok(Forward {
            probs: self.run(input, pass)?.out,
            kinks: Vec::new(),
        })
    }

    fn gradient(&self, input: &FusionFeatures, labels: &[usize], weights: &ClassWeights, pass: Pass) -> Result<Step> {
        let t = self.run(input, pass)?;
        let (loss, d_out) = weighted_cross_entropy_grad(&t.out, labels, weights)?;
        let (g_head, d_zdrop) = self.head.backward(&t.z_drop, &t.out, &d_out);
        let d_z = DropoutLayer::backward(t.mask.as_deref(), &d_zdrop);
        let (d_left, d_right) = d_z.hsplit(self.projection_width());

        let d_a = d_left.hadamard(&t.h_f)?;
        let mut d_hf = d_left.hadamard(&t.a)?;
        let d_b = d_right.hadamard(&t.h_i)?;
        let mut d_hi = d_right.hadamard(&t.b)?;

        let (g_a, d_hi_gate) = self.attn_a.backward(&t.h_i, &t.a, &d_a);
        let (g_b, d_hf_gate) = self.attn_b.backward(&t.h_f, &t.b, &d_b);
        crate::nn::axpy(1.0, d_hi_gate.as_slice(), d_hi.as_mut_slice());
        crate::nn::axpy(1.0, d_hf_gate.as_slice(), d_hf.as_mut_slice());

        let (g_bn_f, d_fproj) = self.bn_fea.backward(&t.bn_f, &d_hf);
        let (g_bn_i, d_gproj) = self.bn_img.backward(&t.bn_i, &d_hi);
        let (g_pf, _) = self.proj_fea.backward(&input.fea, &t.f_proj, &d_fproj);
        let (g_pi, _) = self.proj_img.backward(&input.img, &t.g_proj, &d_gproj);

        let batch_stats: Vec<BatchStats> = [t.bn_f.stats(), t.bn_i.stats()].into_iter().flatten().cloned().collect();
        Ok(Step {
            loss,
            probs: t.out,
            grads: vec![
                g_pf.weights,
                g_pf.bias,
                g_bn_f.gamma,
                g_bn_f.beta,
                g_pi.weights,
                g_pi.bias,
                g_bn_i.gamma,
                g_bn_i.beta,
                g_a.weights,
                g_a.bias,
                g_b.weights,
                g_b.bias,
                g_head.weights,
                g_head.bias,
            ],
            batch_stats,
        })
    }

    fn apply_batch_stats(&mut self, stats: &[BatchStats]) {
        if let [f, i] = stats {
            self.bn_fea.update_running(f);
            self.bn_img.update_running(i);
        }
    }

    fn min_train_batch(&self) -> usize {
        2
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::nn::{finite_difference_check, random_matrix, GradCheckOptions};

    fn small(gate: GateActivation, dropout: f64, seed: u64) -> IntermediateFusionModel {
        let cfg = IntermediateConfig {
            projection_width: 6,
            gate,
            dropout,
        };
        let mut m = IntermediateFusionModel::new(5, 9, &cfg, seed).unwrap();
        // Move batch-norm state off its identity initialization.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        for bn in [&mut m.bn_fea, &mut m.bn_img] {
            bn.gamma.iter_mut().for_each(|g| *g = rng.random_range(0.5..1.5));
            bn.beta.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
            bn.running_mean.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
            bn.running_var.iter_mut().for_each(|b| *b = rng.random_range(0.2..2.0));
        }
        m
    }

    fn inputs(n: usize, seed: u64) -> FusionFeatures {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FusionFeatures::new(random_matrix(n, 5, &mut rng), random_matrix(n, 9, &mut rng)).unwrap()
    }

    #[test]
    fn default_shapes() {
        let m = IntermediateFusionModel::with_defaults(128, &IntermediateConfig::default(), 0).unwrap();
        assert_eq!(m.projection_width(), 512);
        assert_eq!(m.head.inputs(), 1024);
        assert_eq!(m.proj_img.inputs(), 1280);
        assert_eq!(m.dropout.rate(), 0.4);
        assert_eq!(m.gate(), GateActivation::Softmax);
    }

    #[test]
    fn zero_inputs_and_zero_head_give_uniform_output() {
        let mut m = small(GateActivation::Softmax, 0.4, 1);
        m.head.params_mut().into_iter().for_each(|p| p.iter_mut().for_each(|v| *v = 0.0));
        let x = FusionFeatures::new(Matrix::zeros(3, 5), Matrix::zeros(3, 9)).unwrap();
        let p = m.predict_proba(&x).unwrap();
        assert!(p.as_slice().iter().all(|&v| (v - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn inference_is_deterministic_and_simplex() {
        let m = small(GateActivation::Softmax, 0.4, 2);
        for trial in 0..1000u64 {
            let x = inputs(2, trial);
            let p = m.predict_proba(&x).unwrap();
            for r in p.iter_rows() {
                assert!(r.iter().all(|&v| v >= 0.0));
                assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
            if trial < 5 {
                assert_eq!(p, m.predict_proba(&x).unwrap());
            }
        }
    }

    #[test]
    fn train_mode_needs_two_rows() {
        let m = small(GateActivation::Softmax, 0.0, 3);
        let err = m.forward(&inputs(1, 0), Pass::Train { seed: 1 }).unwrap_err();
        assert!(matches!(err, Error::BatchTooSmall(1)));
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let m = small(GateActivation::Softmax, 0.0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = FusionFeatures::new(random_matrix(2, 4, &mut rng), random_matrix(2, 9, &mut rng)).unwrap();
        assert!(matches!(m.predict_proba(&x), Err(Error::Shape { .. })));
    }

    #[test]
    fn gradient_check_inference_and_train_modes() {
        let labels = [0, 1, 2, 3, 4, 5, 6, 2];
        let weights = ClassWeights::new([1.0, 1.3, 0.7, 2.0, 1.0, 0.9, 1.1]).unwrap();
        for gate in [GateActivation::Softmax, GateActivation::Sigmoid] {
            for seed in 0..3 {
                let x = inputs(8, 100 + seed);
                let m = small(gate, 0.0, seed);
                let r = finite_difference_check(&m, &x, &labels, &weights, Pass::Inference, &GradCheckOptions::default())
                    .unwrap();
                assert!(r.max_relative_error <= 1e-4, "{gate} inference {r:?}");
                // Batch statistics and a fixed dropout mask are differentiable
                // too. The projection biases (tensors 1 and 5) cancel under
                // batch statistics, so they are checked for exact invariance.
                let m = small(gate, 0.4, seed);
                let pass = Pass::Train { seed: 77 + seed };
                let opts = GradCheckOptions {
                    tensors: Some((0..14).filter(|t| ![1, 5].contains(t)).collect()),
                    ..GradCheckOptions::default()
                };
                let r = finite_difference_check(&m, &x, &labels, &weights, pass, &opts).unwrap();
                assert!(r.max_relative_error <= 1e-4, "{gate} train {r:?}");
                let step = m.gradient(&x, &labels, &weights, pass).unwrap();
                assert!(step.grads[1].iter().chain(&step.grads[5]).all(|g| g.abs() <= 1e-12));
            }
        }
    }
}
