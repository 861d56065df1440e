//! FEA-only classifiers, the shared training loop and the model file format.

mod format;
mod logreg;
mod mlp;
mod train;

pub use format::{load_model, save_model, LayerSpec, ModelFile, SavedModel, UnimodalModel, FORMAT_VERSION};
pub use logreg::{LogReg, LogRegConfig};
pub use mlp::{Mlp, MlpConfig, DEFAULT_MLP_PARAMETERS};
pub use train::{accuracy, batch_indices, fit, train_logreg, train_mlp, LabeledBatch, TrainConfig, TrainHistory};

use crate::dataset::EmotionLabel;
use crate::nn::{argmax_rows, Matrix};

/// Row-wise argmax as labels; ties go to the lowest class index.
pub fn predict_label(probs: &Matrix) -> Vec<EmotionLabel> {
    argmax_rows(probs)
        .into_iter()
        .map(|i| EmotionLabel::from_index(i).expect("7 columns"))
        .collect()
}
