//! Synthetic planted-signal datasets.
//!
//! Every modality carries the labels in a few "planted" feature channels
//! (arousal rescaled to [-1, 1] in one block, valence in another) buried in
//! per-frame Gaussian noise, so the label is recoverable from the mean of a
//! planted channel. Each modality additionally sees its own utterance-level
//! perturbation of the labels ("view noise"), so no single modality is
//! perfect and combining modalities genuinely helps.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::{write_feature_tensor, write_manifest, DatasetManifest, FeatureSequence, LabelRanges, Split, UtteranceRecord};
use crate::rng::{rng_from_seed, subseed, Rng};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub visual_dim: usize,
    pub audio_dim: usize,
    pub text_dim: usize,
    /// Inclusive frame-count range of visual sequences.
    pub frames: (usize, usize),
    /// Inclusive token-count range of text sequences.
    pub tokens: (usize, usize),
    /// Waveform length; `None` omits the waveform modality.
    pub wave_len: Option<usize>,
    /// Channels per target carrying the signal.
    pub planted: usize,
    /// Per-frame noise on planted channels.
    pub signal_noise: f64,
    /// Noise on all other channels.
    pub background_noise: f64,
    /// Per-utterance, per-modality noise on the planted means.
    pub view_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_train: 200,
            n_val: 50,
            visual_dim: 512,
            audio_dim: 256,
            text_dim: 400,
            frames: (20, 80),
            tokens: (4, 16),
            wave_len: None,
            planted: 8,
            signal_noise: 0.5,
            background_noise: 0.5,
            view_noise: 0.2,
            seed: 0,
        }
    }
}

struct Latent {
    za: f64,
    zv: f64,
}

impl Latent {
    fn view(&self, sd: f64, rng: &mut Rng) -> Latent {
        if sd == 0.0 {
            return Latent { za: self.za, zv: self.zv };
        }
        let n = Normal::new(0.0, sd).expect("noise sd");
        Latent { za: self.za + n.sample(rng), zv: self.zv + n.sample(rng) }
    }
}

fn planted_rows(rows: usize, dim: usize, lat: &Latent, cfg: &SynthConfig, rng: &mut Rng) -> Vec<f32> {
    let sig = Normal::new(0.0, cfg.signal_noise).expect("noise sd");
    let bg = Normal::new(0.0, cfg.background_noise).expect("noise sd");
    let p = cfg.planted;
    let mut out = Vec::with_capacity(rows * dim);
    for _ in 0..rows {
        for c in 0..dim {
            let v = if c < p {
                lat.za + sig.sample(rng)
            } else if c < 2 * p {
                lat.zv + sig.sample(rng)
            } else {
                bg.sample(rng)
            };
            out.push(v as f32);
        }
    }
    out
}

/// Positive pulses scaled by arousal and negative pulses scaled by valence
/// on a low-noise background.
fn waveform(len: usize, a: f64, v01: f64, rng: &mut Rng) -> Vec<f32> {
    let bg = Normal::new(0.0, 0.05).expect("noise sd");
    let mut w: Vec<f64> = (0..len).map(|_| bg.sample(rng)).collect();
    let width = (len / 64).max(2);
    for k in 0..4 {
        let (height, sign) = if k % 2 == 0 { (a, 1.0) } else { (v01, -1.0) };
        let start = rng.gen_range(0..len.saturating_sub(width).max(1));
        for i in 0..width.min(len - start) {
            let tri = 1.0 - (2.0 * i as f64 / width as f64 - 1.0).abs();
            w[start + i] += sign * height * tri;
        }
    }
    w.into_iter().map(|x| x as f32).collect()
}

/// Writes feature tensors under `dir/features/` and the manifest to
/// `dir/manifest.jsonl`; returns the parsed-equivalent manifest.
pub fn generate(dir: &Path, cfg: &SynthConfig) -> Result<DatasetManifest> {
    if cfg.n_train == 0 || cfg.planted == 0 || 2 * cfg.planted > cfg.visual_dim.min(cfg.audio_dim).min(cfg.text_dim) {
        return Err(Error::Invalid("synthetic config needs utterances and room for planted channels".into()));
    }
    if cfg.frames.0 == 0 || cfg.frames.0 > cfg.frames.1 || cfg.tokens.0 == 0 || cfg.tokens.0 > cfg.tokens.1 {
        return Err(Error::Invalid("empty frame/token range".into()));
    }
    let feat = dir.join("features");
    fs::create_dir_all(&feat).map_err(|e| Error::io(&feat, e))?;
    let mut rng = rng_from_seed(subseed(cfg.seed, "synth"));
    let mut records = Vec::with_capacity(cfg.n_train + cfg.n_val);
    let mut video = 0usize;
    for (split, count) in [(Split::Train, cfg.n_train), (Split::Validation, cfg.n_val)] {
        let mut made = 0;
        while made < count {
            let per_video = rng.gen_range(1..=4usize).min(count - made);
            let video_id = format!("video{video:03}");
            video += 1;
            for u in 0..per_video {
                let id = format!("{video_id}_utt{u}");
                let arousal: f64 = rng.gen_range(0.0..=1.0);
                let valence: f64 = rng.gen_range(-1.0..=1.0);
                let lat = Latent { za: 2.0 * arousal - 1.0, zv: valence };
                let write = |suffix: &str, seq: FeatureSequence| -> Result<PathBuf> {
                    let rel = PathBuf::from("features").join(format!("{id}.{suffix}.aff"));
                    write_feature_tensor(&dir.join(&rel), &seq)?;
                    Ok(rel)
                };
                let nf = rng.gen_range(cfg.frames.0..=cfg.frames.1);
                let view = lat.view(cfg.view_noise, &mut rng);
                let vis = planted_rows(nf, cfg.visual_dim, &view, cfg, &mut rng);
                let view = lat.view(cfg.view_noise, &mut rng);
                let aud = planted_rows(1, cfg.audio_dim, &view, cfg, &mut rng);
                let nt = rng.gen_range(cfg.tokens.0..=cfg.tokens.1);
                let view = lat.view(cfg.view_noise, &mut rng);
                let txt = planted_rows(nt, cfg.text_dim, &view, cfg, &mut rng);
                let wave = match cfg.wave_len {
                    Some(l) => {
                        let v = lat.view(cfg.view_noise, &mut rng);
                        Some(waveform(l, (v.za + 1.0) / 2.0, (v.zv + 1.0) / 2.0, &mut rng))
                    }
                    None => None,
                };
                records.push(UtteranceRecord {
                    utterance_id: id.clone(),
                    video_id: video_id.clone(),
                    arousal,
                    valence,
                    split,
                    visual: Some(write("visual", FeatureSequence::from_rows(nf, cfg.visual_dim, vis)?)?),
                    audio_vec: Some(write("audio", FeatureSequence::vector(aud)?)?),
                    audio_wave: match wave {
                        Some(w) => Some(write("wave", FeatureSequence::vector(w)?)?),
                        None => None,
                    },
                    text_emb: Some(write("text", FeatureSequence::from_rows(nt, cfg.text_dim, txt)?)?),
                });
            }
            made += per_video;
        }
    }
    let manifest = DatasetManifest { root: dir.to_path_buf(), label_ranges: LabelRanges::default(), records };
    write_manifest(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
