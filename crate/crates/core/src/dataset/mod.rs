//! FEA and image-modality data model, JSONL ingestion, class weighting,
//! multimodal pairing and the synthetic generator.

mod loader;
mod pairing;
mod summary;
mod synth;
mod weights;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use loader::{
    load_fea_dataset, load_image_observations, parse_fea_jsonl, parse_image_observations,
    write_fea_jsonl, write_image_observations,
};
pub use pairing::{pair_multimodal, MultimodalBundle, MultimodalSample};
pub use summary::{split_summary, SplitSummary};
pub use synth::{generate_synthetic, SynthConfig, SynthMode};
pub use weights::{class_weights_from_counts, compute_class_weights};

use crate::nn::Matrix;
use crate::{FEA_DIM, IMAGE_FEATURE_DIM, NUM_CLASSES};

/// The seven emotion categories in canonical index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionLabel {
    Anger,
    Disgust,
    Fear,
    Happiness,
    Neutral,
    Sadness,
    Surprise,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; NUM_CLASSES] = [
        EmotionLabel::Anger,
        EmotionLabel::Disgust,
        EmotionLabel::Fear,
        EmotionLabel::Happiness,
        EmotionLabel::Neutral,
        EmotionLabel::Sadness,
        EmotionLabel::Surprise,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionLabel::Anger => "anger",
            EmotionLabel::Disgust => "disgust",
            EmotionLabel::Fear => "fear",
            EmotionLabel::Happiness => "happiness",
            EmotionLabel::Neutral => "neutral",
            EmotionLabel::Sadness => "sadness",
            EmotionLabel::Surprise => "surprise",
        }
    }

    /// Capitalized name for report tables.
    pub fn title(self) -> &'static str {
        match self {
            EmotionLabel::Anger => "Anger",
            EmotionLabel::Disgust => "Disgust",
            EmotionLabel::Fear => "Fear",
            EmotionLabel::Happiness => "Happiness",
            EmotionLabel::Neutral => "Neutral",
            EmotionLabel::Sadness => "Sadness",
            EmotionLabel::Surprise => "Surprise",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmotionLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown emotion label {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown split {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Central,
    Side,
}

impl View {
    pub const ALL: [View; 2] = [View::Central, View::Side];

    pub fn as_str(self) -> &'static str {
        match self {
            View::Central => "central",
            View::Side => "side",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        View::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown view {s:?}"))
    }
}

/// 63 activation strengths in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeaVector(Vec<f64>);

impl FeaVector {
    pub fn new(values: Vec<f64>) -> Result<Self, String> {
        if values.len() != FEA_DIM {
            return Err(format!("fea length {} ≠ {FEA_DIM}", values.len()));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(format!("fea entry {i} = {v} outside [0,1]"));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for FeaVector {
    type Error = String;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<FeaVector> for Vec<f64> {
    fn from(v: FeaVector) -> Self {
        v.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: String,
    pub participant: String,
    pub split: Split,
    pub label: EmotionLabel,
    pub fea: FeaVector,
}

/// Output of the frozen image model for one view of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageObservation {
    pub sample_id: String,
    pub view: View,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

/// Line-numbered ingestion and pairing errors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("line {line}: invalid record: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: field `fea`: fea length {len} ≠ {FEA_DIM}")]
    FeaLength { line: usize, len: usize },
    #[error("line {line}: field `fea`: entry {index} = {value} outside [0,1]")]
    FeaRange { line: usize, index: usize, value: f64 },
    #[error("line {line}: field `label`: unknown emotion label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: field `id`: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: field `split`: unknown split {split:?}")]
    UnknownSplit { line: usize, split: String },
    #[error("line {line}: field `view`: unknown view {view:?}")]
    UnknownView { line: usize, view: String },
    #[error("line {line}: field `probs`: expected {NUM_CLASSES} entries, got {len}")]
    ProbsLength { line: usize, len: usize },
    #[error("line {line}: field `probs`: entry {index} = {value} is negative or non-finite")]
    ProbsEntry { line: usize, index: usize, value: f64 },
    #[error("line {line}: field `probs`: probabilities sum to {sum}, outside 1 ± 1e-4")]
    ProbsSum { line: usize, sum: f64 },
    #[error("line {line}: field `features`: length {len} ≠ {IMAGE_FEATURE_DIM}")]
    FeaturesLength { line: usize, len: usize },
    #[error("line {line}: record has neither `probs` nor `features`")]
    NoModality { line: usize },
    #[error("line {line}: field `sample_id`: duplicate observation ({id}, {view})")]
    DuplicateObservation { line: usize, id: String, view: View },
    #[error("observation #{record}: field `sample_id`: refers to unknown sample {id:?}")]
    DanglingObservation { record: usize, id: String },
    #[error("sample {id:?} has no {view} observation")]
    MissingView { id: String, view: View },
}

/// All samples of one FEA dataset in file order, with per-split class counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    samples: Vec<LabeledSample>,
    counts: [[usize; NUM_CLASSES]; 3],
    by_id: HashMap<String, usize>,
}

impl DatasetBundle {
    /// Builds a bundle, rejecting duplicate ids (reported with 1-based
    /// positions as line numbers).
    pub fn new(samples: Vec<LabeledSample>) -> Result<Self, DataError> {
        let mut by_id = HashMap::with_capacity(samples.len());
        let mut counts = [[0usize; NUM_CLASSES]; 3];
        for (i, s) in samples.iter().enumerate() {
            if by_id.insert(s.id.clone(), i).is_some() {
                return Err(DataError::DuplicateId {
                    line: i + 1,
                    id: s.id.clone(),
                });
            }
            counts[s.split.index()][s.label.index()] += 1;
        }
        Ok(Self { samples, counts, by_id })
    }

    pub fn empty() -> Self {
        Self {
            samples: Vec::new(),
            counts: [[0; NUM_CLASSES]; 3],
            by_id: HashMap::new(),
        }
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.counts[split.index()].iter().sum()
    }

    pub fn class_counts(&self, split: Split) -> [usize; NUM_CLASSES] {
        self.counts[split.index()]
    }

    pub fn get(&self, id: &str) -> Option<&LabeledSample> {
        self.by_id.get(id).map(|&i| &self.samples[i])
    }

    /// FEA vectors and label indices of one split, as model inputs.
    pub fn split_arrays(&self, split: Split) -> (Matrix, Vec<usize>) {
        let samples: Vec<&LabeledSample> = self.split(split).collect();
        fea_arrays(&samples)
    }
}

pub fn fea_arrays(samples: &[&LabeledSample]) -> (Matrix, Vec<usize>) {
    let x = Matrix::from_rows(FEA_DIM, samples.iter().map(|s| s.fea.as_slice())).expect("validated length");
    let y = samples.iter().map(|s| s.label.index()).collect();
    (x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_mapping_is_bijective() {
        for (i, l) in EmotionLabel::ALL.iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(EmotionLabel::from_index(i), Some(*l));
            assert_eq!(l.as_str().parse::<EmotionLabel>().unwrap(), *l);
        }
        assert!("joy".parse::<EmotionLabel>().is_err());
        assert_eq!(EmotionLabel::from_index(7), None);
    }

    #[test]
    fn fea_vector_validates() {
        assert!(FeaVector::new(vec![0.5; 63]).is_ok());
        assert_eq!(FeaVector::new(vec![0.5; 62]).unwrap_err(), "fea length 62 ≠ 63");
        let mut v = vec![0.0; 63];
        v[10] = 1.5;
        assert!(FeaVector::new(v).is_err());
    }
}
