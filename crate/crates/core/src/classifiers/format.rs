//! Versioned JSON model files.
//!
//! ```json
//! {"format_version": 1, "kind": "mlp", "layers": [...], "params": {"dense_0.weights": [...], ...}}
//! ```
//!
//! Floats are written in shortest round-trip form, so every parameter is
//! restored bit for bit. Fusion files embed their frozen FEA model under
//! `fea_model`.

use std::collections::HashSet;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{LogReg, Mlp};
use crate::fusion::{IntermediateFusionModel, LateFusionModel, LateStrategy};
use crate::nn::{
    Activation, BatchNormLayer, DenseLayer, DenseNetwork, DropoutLayer, Layer, Matrix, Objective, Parameterized,
};
use crate::{Error, Result};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        name: String,
        inputs: usize,
        outputs: usize,
        activation: Activation,
    },
    BatchNorm {
        name: String,
        dim: usize,
        momentum: f64,
        epsilon: f64,
    },
    Dropout {
        name: String,
        rate: f64,
    },
    Vector {
        name: String,
        len: usize,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &str {
        match self {
            LayerSpec::Dense { name, .. }
            | LayerSpec::BatchNorm { name, .. }
            | LayerSpec::Dropout { name, .. }
            | LayerSpec::Vector { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u64,
    pub kind: String,
    pub layers: Vec<LayerSpec>,
    pub params: IndexMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub meta: serde_json::Map<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fea_model: Option<Box<ModelFile>>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::ModelCorrupt(msg.into())
}

#[derive(Default)]
struct Writer {
    layers: Vec<LayerSpec>,
    params: IndexMap<String, Vec<f64>>,
}

impl Writer {
    fn dense(&mut self, name: &str, d: &DenseLayer) {
        self.layers.push(LayerSpec::Dense {
            name: name.into(),
            inputs: d.inputs(),
            outputs: d.outputs(),
            activation: d.activation(),
        });
        self.params.insert(format!("{name}.weights"), d.weights().as_slice().to_vec());
        self.params.insert(format!("{name}.bias"), d.bias().to_vec());
    }

    fn batch_norm(&mut self, name: &str, bn: &BatchNormLayer) {
        self.layers.push(LayerSpec::BatchNorm {
            name: name.into(),
            dim: bn.dim(),
            momentum: bn.momentum,
            epsilon: bn.epsilon,
        });
        for (key, v) in [
            ("gamma", &bn.gamma),
            ("beta", &bn.beta),
            ("running_mean", &bn.running_mean),
            ("running_var", &bn.running_var),
        ] {
            self.params.insert(format!("{name}.{key}"), v.clone());
        }
    }

    fn dropout(&mut self, name: &str, d: &DropoutLayer) {
        self.layers.push(LayerSpec::Dropout {
            name: name.into(),
            rate: d.rate(),
        });
    }

    fn vector(&mut self, name: &str, v: &[f64]) {
        self.layers.push(LayerSpec::Vector {
            name: name.into(),
            len: v.len(),
        });
        self.params.insert(name.into(), v.to_vec());
    }

    fn finish(self, kind: impl Into<String>) -> ModelFile {
        ModelFile {
            format_version: FORMAT_VERSION,
            kind: kind.into(),
            layers: self.layers,
            params: self.params,
            meta: serde_json::Map::new(),
            fea_model: None,
        }
    }
}

/// Pulls named layers out of a file, checking every length, and verifies at
/// the end that nothing was left over.
struct Reader<'a> {
    file: &'a ModelFile,
    used: HashSet<&'a str>,
}

impl<'a> Reader<'a> {
    fn new(file: &'a ModelFile) -> Result<Self> {
        let mut seen = HashSet::new();
        for l in &file.layers {
            if !seen.insert(l.name()) {
                return Err(corrupt(format!("duplicate layer `{}`", l.name())));
            }
        }
        Ok(Self {
            file,
            used: HashSet::new(),
        })
    }

    fn spec(&self, name: &str) -> Result<&'a LayerSpec> {
        self.file
            .layers
            .iter()
            .find(|l| l.name() == name)
            .ok_or_else(|| corrupt(format!("missing layer `{name}`")))
    }

    fn param(&mut self, key: String, len: usize) -> Result<Vec<f64>> {
        let (k, v) = self
            .file
            .params
            .get_key_value(&key)
            .ok_or_else(|| corrupt(format!("missing parameter `{key}`")))?;
        if v.len() != len {
            return Err(corrupt(format!("parameter `{key}` has {} values, expected {len}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(corrupt(format!("parameter `{key}` is not finite")));
        }
        self.used.insert(k.as_str());
        Ok(v.clone())
    }

    fn dense_from(&mut self, spec: &LayerSpec) -> Result<DenseLayer> {
        let LayerSpec::Dense {
            name,
            inputs,
            outputs,
            activation,
        } = spec
        else {
            return Err(corrupt(format!("layer `{}` is not dense", spec.name())));
        };
        let w = self.param(format!("{name}.weights"), inputs * outputs)?;
        let b = self.param(format!("{name}.bias"), *outputs)?;
        DenseLayer::new(Matrix::from_vec(*outputs, *inputs, w)?, b, *activation)
            .map_err(|e| corrupt(format!("layer `{name}`: {e}")))
    }

    fn dense(&mut self, name: &str) -> Result<DenseLayer> {
        let spec = self.spec(name)?;
        self.dense_from(spec)
    }

    fn batch_norm_from(&mut self, spec: &LayerSpec) -> Result<BatchNormLayer> {
        let LayerSpec::BatchNorm {
            name,
            dim,
            momentum,
            epsilon,
        } = spec
        else {
            return Err(corrupt(format!("layer `{}` is not batch norm", spec.name())));
        };
        let mut bn = BatchNormLayer::with_options(*dim, *momentum, *epsilon)
            .map_err(|e| corrupt(format!("layer `{name}`: {e}")))?;
        bn.gamma = self.param(format!("{name}.gamma"), *dim)?;
        bn.beta = self.param(format!("{name}.beta"), *dim)?;
        bn.running_mean = self.param(format!("{name}.running_mean"), *dim)?;
        bn.running_var = self.param(format!("{name}.running_var"), *dim)?;
        if bn.running_var.iter().any(|&v| v < 0.0) {
            return Err(corrupt(format!("layer `{name}` has a negative running variance")));
        }
        Ok(bn)
    }

    fn batch_norm(&mut self, name: &str) -> Result<BatchNormLayer> {
        let spec = self.spec(name)?;
        self.batch_norm_from(spec)
    }

    fn dropout_from(spec: &LayerSpec) -> Result<DropoutLayer> {
        match spec {
            LayerSpec::Dropout { name, rate } => {
                DropoutLayer::new(*rate).map_err(|e| corrupt(format!("layer `{name}`: {e}")))
            }
            other => Err(corrupt(format!("layer `{}` is not dropout", other.name()))),
        }
    }

    fn dropout(&mut self, name: &str) -> Result<DropoutLayer> {
        Self::dropout_from(self.spec(name)?)
    }

    fn vector(&mut self, name: &str) -> Result<Vec<f64>> {
        match self.spec(name)? {
            LayerSpec::Vector { len, .. } => self.param(name.to_string(), *len),
            other => Err(corrupt(format!("layer `{}` is not a vector", other.name()))),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(extra) = self.file.params.keys().find(|k| !self.used.contains(k.as_str())) {
            return Err(corrupt(format!("unexpected parameter `{extra}`")));
        }
        Ok(())
    }
}

/// A trained FEA-only classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum UnimodalModel {
    Mlp(Mlp),
    LogReg(LogReg),
}

impl UnimodalModel {
    pub fn kind(&self) -> &'static str {
        match self {
            UnimodalModel::Mlp(_) => "mlp",
            UnimodalModel::LogReg(_) => "logreg",
        }
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            UnimodalModel::Mlp(m) => m.predict_proba(x),
            UnimodalModel::LogReg(m) => m.predict_proba(x),
        }
    }

    pub fn as_mlp(&self) -> Option<&Mlp> {
        match self {
            UnimodalModel::Mlp(m) => Some(m),
            UnimodalModel::LogReg(_) => None,
        }
    }

    fn to_file(&self) -> ModelFile {
        let mut w = Writer::default();
        match self {
            UnimodalModel::Mlp(m) => {
                for (k, layer) in m.network().layers().iter().enumerate() {
                    match layer {
                        Layer::Dense(d) => w.dense(&format!("dense_{k}"), d),
                        Layer::Dropout(d) => w.dropout(&format!("dropout_{k}"), d),
                        Layer::BatchNorm(bn) => w.batch_norm(&format!("batch_norm_{k}"), bn),
                    }
                }
                w.finish("mlp")
            }
            UnimodalModel::LogReg(m) => {
                w.dense("linear", m.layer());
                let mut f = w.finish("logreg");
                f.meta.insert("l2_strength".into(), m.l2_strength().into());
                f
            }
        }
    }

    fn from_file(file: &ModelFile) -> Result<Self> {
        let mut r = Reader::new(file)?;
        let model = match file.kind.as_str() {
            "mlp" => {
                let mut layers = Vec::with_capacity(file.layers.len());
                for spec in &file.layers {
                    layers.push(match spec {
                        LayerSpec::Dense { .. } => Layer::Dense(r.dense_from(spec)?),
                        LayerSpec::Dropout { .. } => Layer::Dropout(Reader::dropout_from(spec)?),
                        LayerSpec::BatchNorm { .. } => Layer::BatchNorm(r.batch_norm_from(spec)?),
                        LayerSpec::Vector { name, .. } => {
                            return Err(corrupt(format!("unexpected vector layer `{name}` in an MLP")))
                        }
                    });
                }
                let net = DenseNetwork::new(layers).map_err(|e| corrupt(e.to_string()))?;
                UnimodalModel::Mlp(Mlp::from_network(net)?)
            }
            "logreg" => {
                let l2 = file
                    .meta
                    .get("l2_strength")
                    .and_then(serde_json::Value::as_f64)
                    .ok_or_else(|| corrupt("logreg file lacks meta.l2_strength"))?;
                UnimodalModel::LogReg(LogReg::from_layer(r.dense("linear")?, l2)?)
            }
            other => return Err(corrupt(format!("`{other}` is not a unimodal model kind"))),
        };
        r.finish()?;
        Ok(model)
    }
}

/// Anything the model-file format can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Unimodal(UnimodalModel),
    LateFusion {
        head: LateFusionModel,
        fea_model: UnimodalModel,
    },
    IntermediateFusion {
        head: IntermediateFusionModel,
        fea_model: Mlp,
    },
}

impl From<Mlp> for SavedModel {
    fn from(m: Mlp) -> Self {
        SavedModel::Unimodal(UnimodalModel::Mlp(m))
    }
}

impl From<LogReg> for SavedModel {
    fn from(m: LogReg) -> Self {
        SavedModel::Unimodal(UnimodalModel::LogReg(m))
    }
}

impl SavedModel {
    pub fn kind(&self) -> String {
        match self {
            SavedModel::Unimodal(m) => m.kind().into(),
            SavedModel::LateFusion { head, .. } => format!("late_fusion:{}", head.strategy()),
            SavedModel::IntermediateFusion { .. } => "intermediate_fusion".into(),
        }
    }

    pub fn to_file(&self) -> ModelFile {
        match self {
            SavedModel::Unimodal(m) => m.to_file(),
            SavedModel::LateFusion { head, fea_model } => {
                let mut w = Writer::default();
                match head {
                    LateFusionModel::Average => {}
                    LateFusionModel::WeightedSum { logits } => w.vector("mix_logits", logits),
                    LateFusionModel::ConcatDense(d) | LateFusionModel::Bilinear(d) => w.dense("head", d),
                    LateFusionModel::CrossAttention { attn_a, attn_b } => {
                        w.dense("attn_a", attn_a);
                        w.dense("attn_b", attn_b);
                    }
                }
                let mut f = w.finish(self.kind());
                f.fea_model = Some(Box::new(fea_model.to_file()));
                f
            }
            SavedModel::IntermediateFusion { head, fea_model } => {
                let mut w = Writer::default();
                w.dense("proj_fea", &head.proj_fea);
                w.batch_norm("bn_fea", &head.bn_fea);
                w.dense("proj_img", &head.proj_img);
                w.batch_norm("bn_img", &head.bn_img);
                w.dense("attn_a", &head.attn_a);
                w.dense("attn_b", &head.attn_b);
                w.dropout("dropout", &head.dropout);
                w.dense("head", &head.head);
                let mut f = w.finish(self.kind());
                f.fea_model = Some(Box::new(UnimodalModel::Mlp(fea_model.clone()).to_file()));
                f
            }
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        if file.format_version != FORMAT_VERSION {
            return Err(Error::ModelVersion {
                found: file.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let embedded = || -> Result<UnimodalModel> {
            let inner = file
                .fea_model
                .as_deref()
                .ok_or_else(|| corrupt(format!("`{}` file lacks its fea_model", file.kind)))?;
            if inner.format_version != FORMAT_VERSION {
                return Err(Error::ModelVersion {
                    found: inner.format_version,
                    expected: FORMAT_VERSION,
                });
            }
            UnimodalModel::from_file(inner)
        };
        if let Some(strategy) = file.kind.strip_prefix("late_fusion:") {
            let strategy: LateStrategy = strategy.parse().map_err(corrupt)?;
            let mut r = Reader::new(file)?;
            let head = match strategy {
                LateStrategy::Average => LateFusionModel::Average,
                LateStrategy::WeightedSum => {
                    let logits = r.vector("mix_logits")?;
                    if logits.len() != 2 {
                        return Err(corrupt("weighted_sum needs exactly 2 logits"));
                    }
                    LateFusionModel::WeightedSum { logits }
                }
                LateStrategy::ConcatDense | LateStrategy::Bilinear => {
                    let d = r.dense("head")?;
                    let template = LateFusionModel::new(strategy);
                    if d.parameter_count() != template.parameter_count() || d.activation() != Activation::Softmax {
                        return Err(corrupt(format!("{strategy} head has the wrong shape")));
                    }
                    match strategy {
                        LateStrategy::ConcatDense => LateFusionModel::ConcatDense(d),
                        _ => LateFusionModel::Bilinear(d),
                    }
                }
                LateStrategy::CrossAttention => {
                    let attn_a = r.dense("attn_a")?;
                    let attn_b = r.dense("attn_b")?;
                    for d in [&attn_a, &attn_b] {
                        if d.inputs() != 7 || d.outputs() != 7 || d.activation() != Activation::Softmax {
                            return Err(corrupt("cross-attention layers are 7→7 softmax"));
                        }
                    }
                    LateFusionModel::CrossAttention { attn_a, attn_b }
                }
            };
            r.finish()?;
            return Ok(SavedModel::LateFusion {
                head,
                fea_model: embedded()?,
            });
        }
        if file.kind == "intermediate_fusion" {
            let mut r = Reader::new(file)?;
            let head = IntermediateFusionModel {
                proj_fea: r.dense("proj_fea")?,
                bn_fea: r.batch_norm("bn_fea")?,
                proj_img: r.dense("proj_img")?,
                bn_img: r.batch_norm("bn_img")?,
                attn_a: r.dense("attn_a")?,
                attn_b: r.dense("attn_b")?,
                dropout: r.dropout("dropout")?,
                head: r.dense("head")?,
            };
            r.finish()?;
            head.validate()?;
            let Some(fea_model) = embedded()?.as_mlp().cloned() else {
                return Err(corrupt("intermediate fusion needs an MLP feature extractor"));
            };
            if fea_model.feature_width() != head.fea_width() {
                return Err(corrupt("feature extractor width does not match the fusion projection"));
            }
            return Ok(SavedModel::IntermediateFusion { head, fea_model });
        }
        Ok(SavedModel::Unimodal(UnimodalModel::from_file(file)?))
    }

    /// Compact JSON plus a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(&self.to_file()).expect("model files serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| corrupt(format!("unreadable model file: {e}")))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| corrupt("missing format_version"))?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
        Self::from_file(&file)
    }
}

pub fn save_model(model: &SavedModel, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, model.to_json().as_bytes())
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    SavedModel::from_json(&crate::io::read_to_string(path)?)
}
