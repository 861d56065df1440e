//! Scoring saved models and the predictions interchange format.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vrfer::classifiers::SavedModel;
use vrfer::dataset::{fea_arrays, DatasetBundle, EmotionLabel, MultimodalBundle, Split, View};
use vrfer::fusion::{intermediate_predict, late_predict};
use vrfer::nn::{argmax_rows, Matrix};

/// One line of a `preds.jsonl` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredRow {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<View>,
    pub pred: EmotionLabel,
    pub probs: Vec<f64>,
}

/// Model outputs on one split, row-aligned with their sample keys.
pub struct Scored {
    pub keys: Vec<(String, Option<View>)>,
    pub labels: Vec<usize>,
    pub probs: Matrix,
}

impl Scored {
    pub fn predictions(&self) -> Vec<usize> {
        argmax_rows(&self.probs)
    }

    pub fn rows(&self) -> Vec<PredRow> {
        self.keys
            .iter()
            .zip(self.predictions())
            .enumerate()
            .map(|(i, ((id, view), p))| PredRow {
                sample_id: id.clone(),
                view: *view,
                pred: EmotionLabel::from_index(p).expect("argmax is below 7"),
                probs: self.probs.row(i).to_vec(),
            })
            .collect()
    }
}

fn multimodal_keys(mm: &MultimodalBundle, split: Split) -> Vec<(String, Option<View>)> {
    mm.split(split).map(|s| (s.sample.id.clone(), Some(s.view()))).collect()
}

/// Scores a model on `split`. Unimodal models score one row per FEA sample,
/// or one row per paired view when image observations are supplied.
pub fn score(model: &SavedModel, fea: &DatasetBundle, mm: Option<&MultimodalBundle>, split: Split) -> Result<Scored> {
    match (model, mm) {
        (SavedModel::Unimodal(m), None) => {
            let (x, labels) = fea.split_arrays(split);
            let keys = fea.split(split).map(|s| (s.id.clone(), None)).collect();
            Ok(Scored {
                keys,
                labels,
                probs: m.predict_proba(&x)?,
            })
        }
        (SavedModel::Unimodal(m), Some(mm)) => {
            let samples: Vec<_> = mm.split(split).map(|s| &s.sample).collect();
            let (x, labels) = fea_arrays(&samples);
            Ok(Scored {
                keys: multimodal_keys(mm, split),
                labels,
                probs: m.predict_proba(&x)?,
            })
        }
        (SavedModel::LateFusion { head, fea_model }, Some(mm)) => {
            let (labels, probs) = late_predict(head, fea_model, mm, split)?;
            Ok(Scored {
                keys: multimodal_keys(mm, split),
                labels,
                probs,
            })
        }
        (SavedModel::IntermediateFusion { head, fea_model }, Some(mm)) => {
            let (labels, probs) = intermediate_predict(head, fea_model, mm, split)?;
            Ok(Scored {
                keys: multimodal_keys(mm, split),
                labels,
                probs,
            })
        }
        (_, None) => bail!("{} model needs --image-obs", model.kind()),
    }
}

pub fn parse_preds(text: &str, source: &str) -> Result<Vec<PredRow>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{source}: line {}", i + 1)))
        .collect()
}

/// Labels for two row-aligned prediction files.
pub fn align(a: &[PredRow], b: &[PredRow], labels: &DatasetBundle) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    if a.len() != b.len() {
        bail!("prediction files have {} and {} rows", a.len(), b.len());
    }
    let mut truth = Vec::with_capacity(a.len());
    for (i, (ra, rb)) in a.iter().zip(b).enumerate() {
        let views_differ = matches!((ra.view, rb.view), (Some(x), Some(y)) if x != y);
        if ra.sample_id != rb.sample_id || views_differ {
            bail!(
                "row {}: prediction files are not aligned ({} vs {})",
                i + 1,
                ra.sample_id,
                rb.sample_id
            );
        }
        let sample = labels
            .get(&ra.sample_id)
            .with_context(|| format!("row {}: unknown sample {}", i + 1, ra.sample_id))?;
        truth.push(sample.label.index());
    }
    let preds = |rows: &[PredRow]| rows.iter().map(|r| r.pred.index()).collect();
    Ok((preds(a), preds(b), truth))
}
