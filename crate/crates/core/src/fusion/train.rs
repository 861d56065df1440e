use crate::classifiers::{fit, LabeledBatch, Mlp, TrainConfig, TrainHistory, UnimodalModel};
use crate::dataset::{fea_arrays, MultimodalBundle, Split};
use crate::nn::Objective;
use crate::{Error, Result};

use super::{FusionFeatures, IntermediateConfig, IntermediateFusionModel, LateFusionModel, LatePair, LateStrategy};

/// Fusion training settings share the unimodal fields; only the default
/// batch size differs.
pub type FusionTrainConfig = TrainConfig;

impl TrainConfig {
    pub fn late_fusion() -> Self {
        Self {
            batch_size: 32,
            ..Self::default()
        }
    }

    pub fn intermediate_fusion() -> Self {
        Self {
            batch_size: 128,
            ..Self::default()
        }
    }
}

fn labels_and_fea(bundle: &MultimodalBundle, split: Split) -> (crate::nn::Matrix, Vec<usize>) {
    let samples: Vec<_> = bundle.split(split).map(|s| &s.sample).collect();
    fea_arrays(&samples)
}

/// FEA probabilities from the frozen model paired with ingested image
/// probabilities, for one split.
pub fn late_inputs(fea_model: &UnimodalModel, bundle: &MultimodalBundle, split: Split) -> Result<LabeledBatch<LatePair>> {
    if let Some(s) = bundle.split(split).find(|s| s.observation.probs.is_none()) {
        return Err(Error::MissingModality(format!(
            "sample {} ({}) has no image probabilities",
            s.sample.id,
            s.view()
        )));
    }
    let (x, labels) = labels_and_fea(bundle, split);
    let p_img = bundle.image_probs(split).expect("checked above");
    let p_fea = fea_model.predict_proba(&x)?;
    LabeledBatch::new(LatePair::new(p_fea, p_img)?, labels)
}

/// First-layer MLP features paired with pooled image features, for one split.
pub fn intermediate_inputs(
    mlp: &Mlp,
    bundle: &MultimodalBundle,
    split: Split,
) -> Result<LabeledBatch<FusionFeatures>> {
    if let Some(s) = bundle.split(split).find(|s| s.observation.features.is_none()) {
        return Err(Error::MissingModality(format!(
            "sample {} ({}) has no image features",
            s.sample.id,
            s.view()
        )));
    }
    let (x, labels) = labels_and_fea(bundle, split);
    let img = bundle.image_features(split).expect("checked above");
    LabeledBatch::new(FusionFeatures::new(mlp.extract_features(&x)?, img)?, labels)
}

/// Trains only the fusion head; the FEA model is borrowed immutably. The
/// average strategy has nothing to train and returns with an empty history.
pub fn train_late_fusion(
    strategy: LateStrategy,
    fea_model: &UnimodalModel,
    bundle: &MultimodalBundle,
    config: &FusionTrainConfig,
) -> Result<(LateFusionModel, TrainHistory)> {
    let train = late_inputs(fea_model, bundle, Split::Train)?;
    let val = late_inputs(fea_model, bundle, Split::Val)?;
    if strategy == LateStrategy::Average {
        return Ok((LateFusionModel::Average, TrainHistory::default()));
    }
    fit(LateFusionModel::new(strategy), &train, &val, config)
}

pub fn train_intermediate_fusion(
    mlp: &Mlp,
    bundle: &MultimodalBundle,
    fusion_config: &IntermediateConfig,
    config: &FusionTrainConfig,
) -> Result<(IntermediateFusionModel, TrainHistory)> {
    if config.batch_size < 2 {
        return Err(Error::config("batch_size", "batch norm needs batches of at least 2"));
    }
    let train = intermediate_inputs(mlp, bundle, Split::Train)?;
    let val = intermediate_inputs(mlp, bundle, Split::Val)?;
    let model = IntermediateFusionModel::new(
        mlp.feature_width(),
        train.input.img().cols(),
        fusion_config,
        config.seed,
    )?;
    fit(model, &train, &val, config)
}

/// Class probabilities of a trained late-fusion model on one split.
pub fn late_predict(
    model: &LateFusionModel,
    fea_model: &UnimodalModel,
    bundle: &MultimodalBundle,
    split: Split,
) -> Result<(Vec<usize>, crate::nn::Matrix)> {
    let data = late_inputs(fea_model, bundle, split)?;
    Ok((data.labels, model.predict_proba(&data.input)?))
}

pub fn intermediate_predict(
    model: &IntermediateFusionModel,
    mlp: &Mlp,
    bundle: &MultimodalBundle,
    split: Split,
) -> Result<(Vec<usize>, crate::nn::Matrix)> {
    let data = intermediate_inputs(mlp, bundle, split)?;
    Ok((data.labels, model.predict_proba(&data.input)?))
}
