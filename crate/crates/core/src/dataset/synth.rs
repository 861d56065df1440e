//! Seeded synthetic stand-in for the FEA and image data.
//!
//! Each class gets a random FEA prototype in `[0.2, 0.8]^63` and an image
//! prototype in `[0.2, 0.8]^1280`. Samples are prototype plus Gaussian noise
//! (FEA clipped to `[0, 1]`); both camera views of a sample draw their own
//! image noise. Image probabilities are a softmax over negative squared
//! distances to the image prototypes, which plays the role of a frozen image
//! classifier.
//!
//! In complementary mode FEA prototypes of neutral, sadness and surprise
//! coincide, and image prototypes of anger, disgust and fear coincide, so
//! each modality is blind exactly where the other one sees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DatasetBundle, EmotionLabel, FeaVector, ImageObservation, LabeledSample, Split, View};
use crate::{Error, Result, FEA_DIM, IMAGE_FEATURE_DIM, NUM_CLASSES};

/// Classes sharing one FEA prototype in complementary mode.
pub const FEA_COLLAPSED: [usize; 3] = [4, 5, 6];
/// Classes sharing one image prototype in complementary mode.
pub const IMAGE_COLLAPSED: [usize; 3] = [0, 1, 2];

/// Softmax temperature of the simulated image classifier, per feature
/// dimension. At 1280 dimensions the expected squared prototype gap is about
/// 77, which this maps to a logit gap of about 4.
const IMAGE_TEMPERATURE_PER_DIM: f64 = 0.0075;

const PARTICIPANTS_PER_SPLIT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    Easy,
    Complementary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub per_class_train: usize,
    pub per_class_val: usize,
    pub per_class_test: usize,
    pub sigma: f64,
    pub mode: SynthMode,
    #[serde(default)]
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("sigma", format!("{} must be a finite value ≥ 0", self.sigma)));
        }
        for (name, n) in [
            ("per_class_train", self.per_class_train),
            ("per_class_val", self.per_class_val),
            ("per_class_test", self.per_class_test),
        ] {
            if n < 1 {
                return Err(Error::config(name, "must be ≥ 1"));
            }
        }
        Ok(())
    }

    fn per_class(&self, split: Split) -> usize {
        match split {
            Split::Train => self.per_class_train,
            Split::Val => self.per_class_val,
            Split::Test => self.per_class_test,
        }
    }
}

fn prototypes(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f64>> {
    (0..NUM_CLASSES)
        .map(|_| (0..dim).map(|_| rng.random_range(0.2..=0.8)).collect())
        .collect()
}

fn collapse(protos: &mut [Vec<f64>], classes: &[usize]) {
    let shared = protos[classes[0]].clone();
    for &c in &classes[1..] {
        protos[c] = shared.clone();
    }
}

fn noisy(proto: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    proto
        .iter()
        .map(|&p| {
            let z: f64 = rng.sample(StandardNormal);
            p + sigma * z
        })
        .collect()
}

fn image_probs(features: &[f64], protos: &[Vec<f64>]) -> Vec<f64> {
    let temperature = IMAGE_TEMPERATURE_PER_DIM * features.len() as f64;
    let logits: Vec<f64> = protos
        .iter()
        .map(|mu| {
            let d2: f64 = features.iter().zip(mu).map(|(g, m)| (g - m) * (g - m)).sum();
            -d2 / (2.0 * temperature)
        })
        .collect();
    crate::nn::softmax(&logits)
}

/// Generates an FEA bundle and both views of image observations for every
/// sample. A pure function of `(config, seed)`.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<(DatasetBundle, Vec<ImageObservation>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fea_protos = prototypes(&mut rng, FEA_DIM);
    let mut img_protos = prototypes(&mut rng, IMAGE_FEATURE_DIM);
    if config.mode == SynthMode::Complementary {
        collapse(&mut fea_protos, &FEA_COLLAPSED);
        collapse(&mut img_protos, &IMAGE_COLLAPSED);
    }

    let mut samples = Vec::new();
    let mut observations = Vec::new();
    for split in Split::ALL {
        for (c, label) in EmotionLabel::ALL.iter().enumerate() {
            for k in 0..config.per_class(split) {
                let id = format!("s{:05}", samples.len());
                let fea: Vec<f64> = noisy(&fea_protos[c], config.sigma, &mut rng)
                    .into_iter()
                    .map(|v| v.clamp(0.0, 1.0))
                    .collect();
                for view in View::ALL {
                    let features = noisy(&img_protos[c], config.sigma, &mut rng);
                    observations.push(ImageObservation {
                        sample_id: id.clone(),
                        view,
                        probs: Some(image_probs(&features, &img_protos)),
                        features: Some(features),
                    });
                }
                samples.push(LabeledSample {
                    id,
                    participant: format!("{split}-p{:02}", k % PARTICIPANTS_PER_SPLIT),
                    split,
                    label: *label,
                    fea: FeaVector::new(fea).expect("clipped to [0,1]"),
                });
            }
        }
    }
    Ok((DatasetBundle::new(samples)?, observations))
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    fn config(mode: SynthMode, sigma: f64) -> SynthConfig {
        SynthConfig {
            per_class_train: 3,
            per_class_val: 2,
            per_class_test: 4,
            sigma,
            mode,
            seed: 0,
        }
    }

    #[test]
    fn zero_noise_samples_equal_their_prototype() {
        let (bundle, obs) = generate_synthetic(&config(SynthMode::Easy, 0.0), 11).unwrap();
        assert_eq!(bundle.len(), 7 * 9);
        assert_eq!(obs.len(), 2 * bundle.len());
        let mut by_class: HashMap<EmotionLabel, &FeaVector> = HashMap::new();
        for s in bundle.samples() {
            let proto = by_class.entry(s.label).or_insert(&s.fea);
            assert_eq!(*proto, &s.fea);
        }
        // Distinct classes have distinct prototypes in easy mode.
        let distinct: std::collections::HashSet<String> =
            by_class.values().map(|f| format!("{:?}", f.as_slice())).collect();
        assert_eq!(distinct.len(), 7);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = config(SynthMode::Complementary, 0.1);
        let (a, oa) = generate_synthetic(&cfg, 5).unwrap();
        let (b, ob) = generate_synthetic(&cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(oa, ob);
        let (c, _) = generate_synthetic(&cfg, 6).unwrap();
        assert_ne!(a, c);
    }

    /// Brute-force ceiling of any FEA-only classifier at σ = 0: every
    /// distinct vector can be mapped to one class only, so the best rule
    /// takes the majority class of each group of identical vectors.
    #[test]
    fn complementary_fea_ceiling_is_five_sevenths() {
        let (bundle, _) = generate_synthetic(&config(SynthMode::Complementary, 0.0), 3).unwrap();
        let mut groups: HashMap<String, [usize; 7]> = HashMap::new();
        let test: Vec<_> = bundle.split(Split::Test).collect();
        for s in &test {
            let key = format!("{:?}", s.fea.as_slice());
            groups.entry(key).or_default()[s.label.index()] += 1;
        }
        let best: usize = groups.values().map(|c| *c.iter().max().unwrap()).sum();
        assert_eq!(groups.len(), 5);
        assert_eq!(best * 7, test.len() * 5);
    }

    #[test]
    fn complementary_image_probs_tie_on_collapsed_classes() {
        let (bundle, obs) = generate_synthetic(&config(SynthMode::Complementary, 0.05), 3).unwrap();
        for o in &obs {
            let p = o.probs.as_ref().unwrap();
            assert_eq!(p[0], p[1]);
            assert_eq!(p[1], p[2]);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(bundle.get(&o.sample_id).is_some());
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let err = generate_synthetic(&config(SynthMode::Easy, -1.0), 0).unwrap_err();
        assert!(err.to_string().contains("sigma"));
        let mut cfg = config(SynthMode::Easy, 0.1);
        cfg.per_class_val = 0;
        assert!(generate_synthetic(&cfg, 0).is_err());
    }
}
