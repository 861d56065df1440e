//! Static facial expression recognition for VR headset users.
//!
//! The crate covers the whole pipeline over 63-dimensional facial expression
//! activation (FEA) vectors: a small dense-network engine with hand-derived
//! backpropagation, dataset ingestion and synthetic data, unimodal
//! classifiers (multinomial logistic regression and an MLP), late and
//! intermediate fusion with precomputed image-model outputs, evaluation
//! reports and a deterministic grid search.

pub mod classifiers;
pub mod dataset;
pub mod evaluation;
pub mod fusion;
pub mod hypersearch;
pub mod io;
pub mod nn;

mod error;

pub use error::{Error, Result};

/// Number of emotion categories.
pub const NUM_CLASSES: usize = 7;
/// Length of one facial expression activation vector.
pub const FEA_DIM: usize = 63;
/// Width of the pooled image features produced by the frozen image backbone.
pub const IMAGE_FEATURE_DIM: usize = 1280;
