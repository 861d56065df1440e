use std::collections::HashMap;

use super::{DataError, DatasetBundle, ImageObservation, LabeledSample, Split, View};
use crate::nn::Matrix;
use crate::{IMAGE_FEATURE_DIM, NUM_CLASSES};

/// One FEA sample joined with one view of its image observation. Label and
/// split come from the FEA sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalSample {
    pub sample: LabeledSample,
    pub observation: ImageObservation,
}

impl MultimodalSample {
    pub fn view(&self) -> View {
        self.observation.view
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultimodalBundle {
    samples: Vec<MultimodalSample>,
}

impl MultimodalBundle {
    pub fn samples(&self) -> &[MultimodalSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &MultimodalSample> {
        self.samples.iter().filter(move |s| s.sample.split == split)
    }

    pub fn class_counts(&self, split: Split) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for s in self.split(split) {
            counts[s.sample.label.index()] += 1;
        }
        counts
    }

    /// Image probabilities of a split, `None` if any observation lacks them.
    pub fn image_probs(&self, split: Split) -> Option<Matrix> {
        let rows: Option<Vec<&Vec<f64>>> = self.split(split).map(|s| s.observation.probs.as_ref()).collect();
        Some(Matrix::from_rows(NUM_CLASSES, rows?).expect("validated on ingest"))
    }

    /// Pooled image features of a split, `None` if any observation lacks them.
    pub fn image_features(&self, split: Split) -> Option<Matrix> {
        let rows: Option<Vec<&Vec<f64>>> = self.split(split).map(|s| s.observation.features.as_ref()).collect();
        Some(Matrix::from_rows(IMAGE_FEATURE_DIM, rows?).expect("validated on ingest"))
    }

    /// The first sample (in order) that lacks image probabilities.
    pub fn first_missing_probs(&self) -> Option<&MultimodalSample> {
        self.samples.iter().find(|s| s.observation.probs.is_none())
    }

    pub fn first_missing_features(&self) -> Option<&MultimodalSample> {
        self.samples.iter().find(|s| s.observation.features.is_none())
    }
}

/// Joins FEA samples with their image observations: one multimodal sample per
/// available `(id, view)`, ordered by FEA sample and then central before side.
pub fn pair_multimodal(
    bundle: &DatasetBundle,
    observations: &[ImageObservation],
    require_both_views: bool,
) -> Result<MultimodalBundle, DataError> {
    let mut by_key: HashMap<(&str, View), &ImageObservation> = HashMap::with_capacity(observations.len());
    for (i, obs) in observations.iter().enumerate() {
        if bundle.get(&obs.sample_id).is_none() {
            return Err(DataError::DanglingObservation {
                record: i + 1,
                id: obs.sample_id.clone(),
            });
        }
        by_key.insert((obs.sample_id.as_str(), obs.view), obs);
    }
    let mut samples = Vec::with_capacity(observations.len());
    for sample in bundle.samples() {
        for view in View::ALL {
            match by_key.get(&(sample.id.as_str(), view)) {
                Some(obs) => samples.push(MultimodalSample {
                    sample: sample.clone(),
                    observation: (*obs).clone(),
                }),
                None if require_both_views => {
                    return Err(DataError::MissingView {
                        id: sample.id.clone(),
                        view,
                    })
                }
                None => {}
            }
        }
    }
    Ok(MultimodalBundle { samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{EmotionLabel, FeaVector};

    fn sample(id: &str, split: Split, label: EmotionLabel) -> LabeledSample {
        LabeledSample {
            id: id.into(),
            participant: "p".into(),
            split,
            label,
            fea: FeaVector::new(vec![0.5; 63]).unwrap(),
        }
    }

    fn obs(id: &str, view: View) -> ImageObservation {
        ImageObservation {
            sample_id: id.into(),
            view,
            probs: Some(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
            features: None,
        }
    }

    #[test]
    fn partial_pairing_without_requirement() {
        let bundle = DatasetBundle::new(vec![sample("a", Split::Test, EmotionLabel::Fear)]).unwrap();
        let mm = pair_multimodal(&bundle, &[obs("a", View::Central)], false).unwrap();
        assert_eq!(mm.len(), 1);
        assert_eq!(mm.samples()[0].sample.label, EmotionLabel::Fear);
        assert_eq!(
            pair_multimodal(&bundle, &[obs("a", View::Central)], true).unwrap_err(),
            DataError::MissingView {
                id: "a".into(),
                view: View::Side
            }
        );
    }

    #[test]
    fn dangling_observation_is_rejected() {
        let bundle = DatasetBundle::new(vec![sample("a", Split::Train, EmotionLabel::Fear)]).unwrap();
        let err = pair_multimodal(&bundle, &[obs("a", View::Side), obs("b", View::Side)], false).unwrap_err();
        assert_eq!(err, DataError::DanglingObservation { record: 2, id: "b".into() });
    }

    #[test]
    fn both_views_double_the_samples_and_keep_distribution() {
        let samples: Vec<_> = (0..21)
            .map(|i| sample(&format!("s{i}"), Split::ALL[i % 3], EmotionLabel::ALL[i % 7]))
            .collect();
        let bundle = DatasetBundle::new(samples).unwrap();
        let observations: Vec<_> = bundle
            .samples()
            .iter()
            .rev()
            .flat_map(|s| [obs(&s.id, View::Side), obs(&s.id, View::Central)])
            .collect();
        let mm = pair_multimodal(&bundle, &observations, true).unwrap();
        assert_eq!(mm.len(), 42);
        for split in Split::ALL {
            let fea = bundle.class_counts(split);
            let multi = mm.class_counts(split);
            assert!(fea.iter().zip(&multi).all(|(a, b)| 2 * a == *b));
        }
        assert_eq!(mm.samples()[0].view(), View::Central);
        assert_eq!(mm.samples()[1].view(), View::Side);
    }
}
