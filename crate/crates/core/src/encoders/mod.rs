//! Per-modality encoders built from [`crate::nncore`] pieces.
//!
//! | arch            | input                       | representation            |
//! |-----------------|-----------------------------|---------------------------|
//! | `vis_cnn1d`     | frames × 512                | pooled conv concat        |
//! | `vis_lstm_attn` | frames × 512                | attention context         |
//! | `text_mha`      | tokens × 400                | FC(256, relu) output      |
//! | `aud_conv1d`    | raw waveform                | pooled last conv layer    |
//! | `aud_mlp`       | selected hand-crafted vector| last hidden FC            |

mod config;
mod model;
mod prepare;
mod store;
mod train;

pub use config::{ArchConfig, Augmentation, EncoderConfig, Head};
pub use model::{build_encoder, EncoderModel, ForwardOutput, ModelInput};
pub use prepare::{load_inputs, prepare_input, Phase};
pub use store::{load_encoder, save_encoder, CONFIG_FILE, HISTORY_FILE};
pub use train::{
    encoder_predict, evaluate_raw, extract_representation, train_encoder, EpochRecord, Prediction, Representation, TrainedEncoder,
};
