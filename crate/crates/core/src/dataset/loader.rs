use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;

use super::{DataError, DatasetBundle, EmotionLabel, FeaVector, ImageObservation, LabeledSample, Split, View};
use crate::{io, Result, FEA_DIM, IMAGE_FEATURE_DIM, NUM_CLASSES};

/// Accepted deviation of an ingested probability vector's sum from 1.
pub const PROB_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Deserialize)]
struct RawFeaRecord {
    id: String,
    participant: String,
    split: String,
    label: String,
    fea: Vec<f64>,
}

#[derive(Deserialize)]
struct RawObservation {
    sample_id: String,
    view: String,
    #[serde(default)]
    probs: Option<Vec<f64>>,
    #[serde(default)]
    features: Option<Vec<f64>>,
}

/// Non-blank lines with 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn parse_fea_jsonl(text: &str) -> Result<DatasetBundle, DataError> {
    let mut samples = Vec::new();
    let mut ids = HashSet::new();
    for (line, record) in records(text) {
        let raw: RawFeaRecord = serde_json::from_str(record).map_err(|e| DataError::Json {
            line,
            message: e.to_string(),
        })?;
        if raw.fea.len() != FEA_DIM {
            return Err(DataError::FeaLength {
                line,
                len: raw.fea.len(),
            });
        }
        if let Some((index, &value)) = raw.fea.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(DataError::FeaRange { line, index, value });
        }
        let label = raw
            .label
            .parse::<EmotionLabel>()
            .map_err(|_| DataError::UnknownLabel {
                line,
                label: raw.label.clone(),
            })?;
        let split = raw.split.parse::<Split>().map_err(|_| DataError::UnknownSplit {
            line,
            split: raw.split.clone(),
        })?;
        if !ids.insert(raw.id.clone()) {
            return Err(DataError::DuplicateId { line, id: raw.id });
        }
        samples.push(LabeledSample {
            id: raw.id,
            participant: raw.participant,
            split,
            label,
            fea: FeaVector::new(raw.fea).expect("validated above"),
        });
    }
    DatasetBundle::new(samples)
}

pub fn load_fea_dataset(path: &Path) -> Result<DatasetBundle> {
    Ok(parse_fea_jsonl(&io::read_to_string(path)?)?)
}

pub fn write_fea_jsonl(bundle: &DatasetBundle) -> Result<String> {
    io::to_jsonl(bundle.samples())
}

pub fn parse_image_observations(text: &str) -> Result<Vec<ImageObservation>, DataError> {
    let mut out = Vec::new();
    let mut keys = HashSet::new();
    for (line, record) in records(text) {
        let raw: RawObservation = serde_json::from_str(record).map_err(|e| DataError::Json {
            line,
            message: e.to_string(),
        })?;
        let view = raw.view.parse::<View>().map_err(|_| DataError::UnknownView {
            line,
            view: raw.view.clone(),
        })?;
        if raw.probs.is_none() && raw.features.is_none() {
            return Err(DataError::NoModality { line });
        }
        let probs = raw.probs.map(|p| normalize_probs(line, p)).transpose()?;
        if let Some(f) = &raw.features {
            if f.len() != IMAGE_FEATURE_DIM {
                return Err(DataError::FeaturesLength { line, len: f.len() });
            }
        }
        if !keys.insert((raw.sample_id.clone(), view)) {
            return Err(DataError::DuplicateObservation {
                line,
                id: raw.sample_id,
                view,
            });
        }
        out.push(ImageObservation {
            sample_id: raw.sample_id,
            view,
            probs,
            features: raw.features,
        });
    }
    Ok(out)
}

/// Renormalizes a probability vector whose sum is within tolerance of 1.
/// Vectors that already sum to exactly 1 are returned untouched.
fn normalize_probs(line: usize, probs: Vec<f64>) -> Result<Vec<f64>, DataError> {
    if probs.len() != NUM_CLASSES {
        return Err(DataError::ProbsLength { line, len: probs.len() });
    }
    if let Some((index, &value)) = probs.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(DataError::ProbsEntry { line, index, value });
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
        return Err(DataError::ProbsSum { line, sum });
    }
    if sum == 1.0 {
        return Ok(probs);
    }
    Ok(probs.into_iter().map(|p| p / sum).collect())
}

pub fn load_image_observations(path: &Path) -> Result<Vec<ImageObservation>> {
    Ok(parse_image_observations(&io::read_to_string(path)?)?)
}

pub fn write_image_observations(observations: &[ImageObservation]) -> Result<String> {
    io::to_jsonl(observations)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, split: &str, label: &str, fea: &[f64]) -> String {
        serde_json::json!({"id": id, "participant": "p1", "split": split, "label": label, "fea": fea}).to_string()
    }

    #[test]
    fn singleton_file() {
        let text = record("a", "train", "fear", &[0.25; 63]);
        let bundle = parse_fea_jsonl(&text).unwrap();
        assert_eq!(bundle.len(), 1);
        assert_eq!(bundle.class_counts(Split::Train)[EmotionLabel::Fear.index()], 1);
        assert_eq!(bundle.class_counts(Split::Train).iter().sum::<usize>(), 1);
    }

    #[test]
    fn short_vector_is_reported_with_line() {
        let text = format!("{}\n{}\n", record("a", "train", "fear", &[0.25; 63]), record("b", "val", "fear", &[0.25; 62]));
        let err = parse_fea_jsonl(&text).unwrap_err();
        assert_eq!(err, DataError::FeaLength { line: 2, len: 62 });
        assert!(err.to_string().contains("fea length 62 ≠ 63"));
        assert!(err.to_string().starts_with("line 2"));
    }

    #[test]
    fn each_schema_violation_has_its_own_error() {
        let mut fea = vec![0.1; 63];
        fea[5] = 1.01;
        assert!(matches!(
            parse_fea_jsonl(&record("a", "train", "fear", &fea)),
            Err(DataError::FeaRange { line: 1, index: 5, .. })
        ));
        assert!(matches!(
            parse_fea_jsonl(&record("a", "train", "joy", &[0.1; 63])),
            Err(DataError::UnknownLabel { line: 1, .. })
        ));
        assert!(matches!(
            parse_fea_jsonl(&record("a", "holdout", "fear", &[0.1; 63])),
            Err(DataError::UnknownSplit { line: 1, .. })
        ));
        let dup = format!("{}\n\n{}", record("a", "train", "fear", &[0.1; 63]), record("a", "test", "anger", &[0.1; 63]));
        assert!(matches!(parse_fea_jsonl(&dup), Err(DataError::DuplicateId { line: 3, .. })));
        assert!(matches!(parse_fea_jsonl("{not json"), Err(DataError::Json { line: 1, .. })));
    }

    #[test]
    fn one_hot_probs_are_kept() {
        let text = r#"{"sample_id": "a", "view": "central", "probs": [1,0,0,0,0,0,0]}"#;
        let obs = parse_image_observations(text).unwrap();
        assert_eq!(obs[0].probs.as_deref(), Some(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0][..]));
    }

    #[test]
    fn near_simplex_probs_are_renormalized() {
        let text = r#"{"sample_id": "a", "view": "side", "probs": [0.50004,0.5,0,0,0,0,0]}"#;
        let obs = parse_image_observations(text).unwrap();
        let sum: f64 = obs[0].probs.as_ref().unwrap().iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bad_probs_sum_is_rejected_with_sum() {
        let text = r#"{"sample_id": "a", "view": "central", "probs": [0.9,0,0,0,0,0,0]}"#;
        let err = parse_image_observations(text).unwrap_err();
        assert!(matches!(err, DataError::ProbsSum { line: 1, sum } if (sum - 0.9).abs() < 1e-12));
        assert!(err.to_string().contains("0.9"));
    }

    #[test]
    fn zero_features_are_accepted_and_length_checked() {
        let ok = serde_json::json!({"sample_id": "a", "view": "central", "features": vec![0.0; 1280]}).to_string();
        assert_eq!(parse_image_observations(&ok).unwrap().len(), 1);
        let bad = serde_json::json!({"sample_id": "a", "view": "central", "features": vec![0.0; 1279]}).to_string();
        assert!(matches!(
            parse_image_observations(&bad),
            Err(DataError::FeaturesLength { line: 1, len: 1279 })
        ));
    }

    #[test]
    fn duplicate_and_empty_observations_are_rejected() {
        let one = r#"{"sample_id": "a", "view": "central", "probs": [1,0,0,0,0,0,0]}"#;
        let text = format!("{one}\n{one}");
        assert!(matches!(
            parse_image_observations(&text),
            Err(DataError::DuplicateObservation { line: 2, .. })
        ));
        assert!(matches!(
            parse_image_observations(r#"{"sample_id": "a", "view": "central"}"#),
            Err(DataError::NoModality { line: 1 })
        ));
        assert!(matches!(
            parse_image_observations(r#"{"sample_id": "a", "view": "top", "probs": [1,0,0,0,0,0,0]}"#),
            Err(DataError::UnknownView { line: 1, .. })
        ));
    }

    #[test]
    fn fea_round_trip_preserves_content_and_order() {
        let text = [
            record("z", "test", "surprise", &[0.5; 63]),
            record("a", "train", "anger", &[0.125; 63]),
            record("m", "val", "neutral", &[1.0; 63]),
        ]
        .join("\n");
        let bundle = parse_fea_jsonl(&text).unwrap();
        let again = parse_fea_jsonl(&write_fea_jsonl(&bundle).unwrap()).unwrap();
        assert_eq!(bundle, again);
        assert_eq!(again.samples()[0].id, "z");
    }
}
