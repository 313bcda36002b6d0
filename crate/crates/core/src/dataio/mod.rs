//! Data formats and utterance-level preprocessing.

mod feature;
mod folds;
mod manifest;
mod sampling;
mod select;

pub use feature::{decode_aff1, encode_aff1, read_feature_tensor, write_feature_tensor, FeatureSequence};
pub use folds::{kfold_split, FoldAssignment};
pub use manifest::{
    parse_manifest, write_manifest, DatasetManifest, LabelRanges, Modality, Split, UtteranceRecord,
};
pub use sampling::{csa_sample, downsample_every_k, pad_truncate, ssa_sample};
pub use select::{select_features, FeatureSelector, PearsonSelector};
