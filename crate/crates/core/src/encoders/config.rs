use serde::{Deserialize, Serialize};

use crate::dataio::Modality;
use crate::nncore::{LossKind, LossSpec, OptimizerConfig};
use crate::{Error, Result};

/// Architecture and its size parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ArchConfig {
    VisLstmAttn {
        hidden: usize,
        /// Defaults to `hidden`.
        #[serde(default)]
        att_dim: Option<usize>,
        fc_dim: usize,
    },
    VisCnn1d {
        widths: Vec<usize>,
        channels: usize,
        fc_dim: usize,
    },
    TextMha {
        heads: usize,
        head_dim: usize,
        fc_dim: usize,
    },
    AudConv1d {
        /// Output channels of each conv layer.
        channels: Vec<usize>,
        kernel: usize,
        stride: usize,
    },
    AudMlp {
        hidden: Vec<usize>,
        /// Number of input features kept by supervised selection; `None`
        /// uses all of them.
        #[serde(default)]
        select_k: Option<usize>,
    },
}

impl ArchConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ArchConfig::VisLstmAttn { .. } => "vis_lstm_attn",
            ArchConfig::VisCnn1d { .. } => "vis_cnn1d",
            ArchConfig::TextMha { .. } => "text_mha",
            ArchConfig::AudConv1d { .. } => "aud_conv1d",
            ArchConfig::AudMlp { .. } => "aud_mlp",
        }
    }

    pub fn modality(&self) -> Modality {
        match self {
            ArchConfig::VisLstmAttn { .. } | ArchConfig::VisCnn1d { .. } => Modality::Visual,
            ArchConfig::TextMha { .. } => Modality::TextEmb,
            ArchConfig::AudConv1d { .. } => Modality::AudioWave,
            ArchConfig::AudMlp { .. } => Modality::AudioVec,
        }
    }

    /// 1D CNN with widths 2..5 (64 channels each) and a 256-unit FC layer.
    pub fn vis_cnn1d() -> Self {
        ArchConfig::VisCnn1d { widths: vec![2, 3, 4, 5], channels: 64, fc_dim: 256 }
    }

    /// LSTM with 256 hidden cells, attention pooling and a 256-unit FC layer.
    pub fn vis_lstm_attn() -> Self {
        ArchConfig::VisLstmAttn { hidden: 256, att_dim: None, fc_dim: 256 }
    }

    /// 8 heads of 64 units followed by a 256-unit ReLU layer.
    pub fn text_mha() -> Self {
        ArchConfig::TextMha { heads: 8, head_dim: 64, fc_dim: 256 }
    }

    /// Eight strided conv layers, channels doubling from 16 to 256.
    pub fn aud_conv1d() -> Self {
        ArchConfig::AudConv1d { channels: vec![16, 32, 64, 128, 256, 256, 256, 256], kernel: 8, stride: 2 }
    }

    pub fn aud_mlp() -> Self {
        ArchConfig::AudMlp { hidden: vec![128, 64], select_k: Some(256) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    IndependentArousal,
    IndependentValence,
    Multitask,
}

impl Head {
    /// Target indices (0 = arousal, 1 = valence) predicted by this head.
    pub fn targets(self) -> &'static [usize] {
        match self {
            Head::IndependentArousal => &[0],
            Head::IndependentValence => &[1],
            Head::Multitask => &[0, 1],
        }
    }

    pub fn outputs(self) -> usize {
        self.targets().len()
    }
}

/// Training-time sampling of visual frames. Validation always uses
/// deterministic downsampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Augmentation {
    None,
    /// One random frame per chunk of `downsample` frames.
    Ssa,
    /// A random window of consecutive raw frames.
    Csa { window: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Identifier used in reports and fusion specs, e.g. `VisModel2`.
    pub name: String,
    pub arch: ArchConfig,
    /// Feature dimension of one frame/token (1 for waveforms).
    pub input_dim: usize,
    /// Frame/token/sample cap applied by pad/truncate.
    pub seq_len: usize,
    /// Keep one frame in `downsample` (visual inputs only).
    #[serde(default = "one")]
    pub downsample: usize,
    pub head: Head,
    pub loss: LossSpec,
    pub optimizer: OptimizerConfig,
    #[serde(default = "no_aug")]
    pub augmentation: Augmentation,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

fn one() -> usize {
    1
}

fn no_aug() -> Augmentation {
    Augmentation::None
}

impl EncoderConfig {
    /// Full-scale defaults for an architecture: 512-D frames capped at 64 and
    /// downsampled 1-in-5, 400-D tokens capped at 32, waveforms padded to
    /// 600000 samples, multitask head with MAE loss, batch size 64.
    pub fn defaults(name: &str, arch: ArchConfig) -> Self {
        let (input_dim, seq_len, downsample, optimizer) = match &arch {
            ArchConfig::VisLstmAttn { .. } | ArchConfig::VisCnn1d { .. } => (512, 64, 5, OptimizerConfig::adam()),
            ArchConfig::TextMha { .. } => {
                (400, 32, 1, OptimizerConfig { lr0: 0.005, ..OptimizerConfig::sgd_momentum() })
            }
            ArchConfig::AudConv1d { .. } => (1, 600_000, 1, OptimizerConfig::sgd_momentum()),
            ArchConfig::AudMlp { .. } => (6552, 1, 1, OptimizerConfig::adam()),
        };
        EncoderConfig {
            name: name.to_string(),
            arch,
            input_dim,
            seq_len,
            downsample,
            head: Head::Multitask,
            loss: LossSpec::new(LossKind::Mae),
            optimizer,
            augmentation: Augmentation::None,
            epochs: 50,
            batch_size: 64,
            seed: 0,
        }
    }

    pub fn modality(&self) -> crate::dataio::Modality {
        self.arch.modality()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(format!("encoder `{}`: {m}", self.name)));
        if self.name.is_empty() || self.name.contains(['+', '/', '\\']) {
            return bad("name must be non-empty without '+' or path separators".into());
        }
        if self.input_dim == 0 || self.seq_len == 0 || self.downsample == 0 || self.batch_size == 0 {
            return bad("input_dim, seq_len, downsample and batch_size must be positive".into());
        }
        if self.loss.uses_ccc() && self.batch_size < 2 {
            return bad("CCC losses need batch_size >= 2".into());
        }
        self.loss.validate()?;
        if !(self.optimizer.lr0 > 0.0) {
            return bad("learning rate must be positive".into());
        }
        match &self.arch {
            ArchConfig::VisLstmAttn { hidden, att_dim, fc_dim } => {
                if *hidden == 0 || *fc_dim == 0 || *att_dim == Some(0) {
                    return bad("zero-sized layer".into());
                }
            }
            ArchConfig::VisCnn1d { widths, channels, fc_dim } => {
                if widths.is_empty() || widths[0] == 0 || !widths.windows(2).all(|w| w[0] < w[1]) {
                    return bad(format!("conv widths {widths:?} must be positive and strictly increasing"));
                }
                if *channels == 0 || *fc_dim == 0 {
                    return bad("zero-sized layer".into());
                }
            }
            ArchConfig::TextMha { heads, head_dim, fc_dim } => {
                if *heads == 0 || *head_dim == 0 || *fc_dim == 0 {
                    return bad("zero-sized layer".into());
                }
            }
            ArchConfig::AudConv1d { channels, kernel, stride } => {
                if self.input_dim != 1 {
                    return bad("waveform input_dim must be 1".into());
                }
                if channels.is_empty() || channels.contains(&0) || *kernel == 0 || *stride == 0 {
                    return bad("conv stack needs positive channels, kernel and stride".into());
                }
            }
            ArchConfig::AudMlp { hidden, select_k } => {
                if hidden.is_empty() || hidden.contains(&0) {
                    return bad("MLP needs at least one non-empty hidden layer".into());
                }
                if let Some(k) = select_k {
                    if *k == 0 || *k > self.input_dim {
                        return bad(format!("select_k {k} must be in 1..={}", self.input_dim));
                    }
                }
            }
        }
        if let Augmentation::Csa { window: 0 } = self.augmentation {
            return bad("CSA window must be positive".into());
        }
        Ok(())
    }
}
