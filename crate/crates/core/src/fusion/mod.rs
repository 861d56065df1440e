//! Multimodal fusion over a frozen FEA model and precomputed image outputs:
//! five decision-level strategies and a feature-level network with
//! cross-attention gates.

mod intermediate;
mod late;
mod train;

pub use intermediate::{FusionFeatures, GateActivation, IntermediateConfig, IntermediateFusionModel};
pub use late::{bilinear_features, fuse_average, LateFusionModel, LatePair, LateStrategy, SIMPLEX_TOLERANCE};
pub use train::{
    intermediate_inputs, intermediate_predict, late_inputs, late_predict, train_intermediate_fusion,
    train_late_fusion, FusionTrainConfig,
};
