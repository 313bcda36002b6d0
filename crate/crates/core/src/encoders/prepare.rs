use crate::dataio::{
    csa_sample, downsample_every_k, pad_truncate, ssa_sample, DatasetManifest, FeatureSequence, UtteranceRecord,
};
use crate::nncore::{Real, Tensor};
use crate::rng::Rng;
use crate::{Error, Result};

use super::config::{ArchConfig, Augmentation, EncoderConfig};
use super::model::ModelInput;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Applies the configured augmentation.
    Train,
    /// Deterministic: downsampling and pad/truncate only.
    Eval,
}

/// Reads the encoder's modality for every record, in order.
pub fn load_inputs(config: &EncoderConfig, manifest: &DatasetManifest, records: &[&UtteranceRecord]) -> Result<Vec<FeatureSequence>> {
    let m = config.modality();
    records.iter().map(|r| manifest.load(r, m)).collect()
}

/// Turns a stored feature tensor into a model input.
///
/// `rng` is only drawn from in [`Phase::Train`] with SSA/CSA augmentation.
pub fn prepare_input<T: Real>(config: &EncoderConfig, raw: &FeatureSequence, phase: Phase, rng: &mut Rng) -> Result<ModelInput<T>> {
    let shape_err = |what: &str| {
        Err(Error::Shape(format!(
            "encoder `{}` expects {what}, got rank {} tensor of {}×{}",
            config.name,
            raw.rank(),
            raw.frames(),
            raw.dim()
        )))
    };
    match &config.arch {
        ArchConfig::AudMlp { .. } => {
            if raw.rank() != 1 || raw.dim() != config.input_dim {
                return shape_err(&format!("a {}-D vector", config.input_dim));
            }
            Ok(ModelInput::unmasked(raw.to_tensor()))
        }
        ArchConfig::AudConv1d { .. } => {
            let wave = match (raw.rank(), raw.dim()) {
                (1, _) => FeatureSequence::from_rows(raw.dim(), 1, raw.data().to_vec())?,
                (2, 1) => raw.clone(),
                _ => return shape_err("a waveform"),
            };
            Ok(padded(&wave, config.seq_len))
        }
        ArchConfig::TextMha { .. } => {
            if raw.rank() != 2 || raw.dim() != config.input_dim {
                return shape_err(&format!("tokens × {}", config.input_dim));
            }
            Ok(padded(raw, config.seq_len))
        }
        ArchConfig::VisCnn1d { .. } | ArchConfig::VisLstmAttn { .. } => {
            if raw.rank() != 2 || raw.dim() != config.input_dim {
                return shape_err(&format!("frames × {}", config.input_dim));
            }
            let sampled = match (phase, config.augmentation) {
                (Phase::Train, Augmentation::Ssa) => ssa_sample(raw, config.downsample, rng),
                (Phase::Train, Augmentation::Csa { window }) => csa_sample(raw, window, rng),
                _ => downsample_every_k(raw, config.downsample),
            };
            Ok(padded(&sampled, config.seq_len))
        }
    }
}

fn padded<T: Real>(seq: &FeatureSequence, cap: usize) -> ModelInput<T> {
    let (s, mask) = pad_truncate(seq, cap);
    let x: Tensor<T> = s.to_tensor();
    ModelInput { x, mask }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn frames(n: usize, d: usize) -> FeatureSequence {
        FeatureSequence::from_rows(n, d, (0..n * d).map(|v| v as f32).collect()).unwrap()
    }

    #[test]
    fn visual_eval_downsamples_then_pads() {
        let mut c = EncoderConfig::defaults("v", crate::encoders::ArchConfig::vis_cnn1d());
        c.input_dim = 2;
        c.seq_len = 6;
        let inp: ModelInput<f64> = prepare_input(&c, &frames(12, 2), Phase::Eval, &mut rng_from_seed(0)).unwrap();
        assert_eq!(inp.x.rows(), 6);
        assert_eq!(inp.mask, vec![true, true, true, false, false, false]);
        assert_eq!(inp.x.row(1), &[10.0, 11.0]);
    }

    #[test]
    fn augmentation_only_in_training() {
        let mut c = EncoderConfig::defaults("v", crate::encoders::ArchConfig::vis_cnn1d());
        c.input_dim = 1;
        c.seq_len = 100;
        c.augmentation = Augmentation::Ssa;
        let raw = frames(50, 1);
        let eval: ModelInput<f64> = prepare_input(&c, &raw, Phase::Eval, &mut rng_from_seed(0)).unwrap();
        let mut rng = rng_from_seed(0);
        let differs = (0..10).any(|_| {
            let t: ModelInput<f64> = prepare_input(&c, &raw, Phase::Train, &mut rng).unwrap();
            t.x != eval.x
        });
        assert!(differs);
        c.augmentation = Augmentation::Csa { window: 7 };
        let t: ModelInput<f64> = prepare_input(&c, &raw, Phase::Train, &mut rng).unwrap();
        assert_eq!(t.mask.iter().filter(|&&m| m).count(), 7);
    }

    #[test]
    fn waveform_becomes_a_column() {
        let mut c = EncoderConfig::defaults("a", crate::encoders::ArchConfig::aud_conv1d());
        c.seq_len = 5;
        let raw = FeatureSequence::vector(vec![1.0, 2.0, 3.0]).unwrap();
        let inp: ModelInput<f32> = prepare_input(&c, &raw, Phase::Eval, &mut rng_from_seed(0)).unwrap();
        assert_eq!(inp.x.shape(), &[5, 1]);
        assert_eq!(inp.mask, vec![true, true, true, false, false]);
    }

    #[test]
    fn wrong_dims_are_rejected() {
        let c = EncoderConfig::defaults("t", crate::encoders::ArchConfig::text_mha());
        assert!(prepare_input::<f64>(&c, &frames(3, 5), Phase::Eval, &mut rng_from_seed(0)).is_err());
    }
}
