//! Multimodal arousal/valence regression toolkit.
//!
//! The pipeline starts downstream of frozen feature extractors: per-frame
//! visual features, hand-crafted or raw audio, and word embeddings are read
//! from AFF1 tensor files, encoded by small sequence models trained with
//! analytic gradients, and fused by per-target epsilon-SVR regressors.
//! Evaluation uses Lin's concordance correlation coefficient and Pearson
//! correlation.
//!
//! Module map:
//!
//! * [`dataio`]: manifest and tensor formats, frame sampling, feature
//!   selection, grouped fold splitting.
//! * [`nncore`]: layers, attention, losses and optimizers with backward passes.
//! * [`metrics`]: CCC, PCC, MSE/MAE and the cross-model PCC matrix.
//! * [`encoders`]: the per-modality models, their training loop and
//!   checkpoints.
//! * [`fusion`]: RBF kernel, SMO solver, grid search and late fusion.
//! * [`selftest`]: the property suite behind `affect selftest`.

pub mod dataio;
pub mod encoders;
mod error;
pub mod fusion;
pub mod metrics;
pub mod nncore;
pub mod rng;
pub mod selftest;
pub mod synth;

pub use error::{Error, Result, TensorFileError};
