use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nncore::{checkpoint, Real};
use crate::{Error, Result};

use super::config::EncoderConfig;
use super::model::EncoderModel;
use super::train::{EpochRecord, TrainedEncoder};

pub const CONFIG_FILE: &str = "config.json";
pub const HISTORY_FILE: &str = "history.tsv";
const HISTORY_JSON: &str = "history.json";

#[derive(Serialize, Deserialize)]
struct Architecture {
    config: EncoderConfig,
    feature_index: Option<Vec<usize>>,
    best_epoch: Option<usize>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

fn history_tsv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch\tlr\ttrain_loss\ttrain_ccc_arousal\ttrain_ccc_valence\tval_ccc_arousal\tval_ccc_valence\n");
    for h in history {
        let _ = writeln!(
            s,
            "{}\t{:.6e}\t{:.6}\t{}\t{}\t{}\t{}",
            h.epoch,
            h.learning_rate,
            h.train_loss,
            fmt_opt(h.train_ccc[0]),
            fmt_opt(h.train_ccc[1]),
            fmt_opt(h.val_ccc[0]),
            fmt_opt(h.val_ccc[1])
        );
    }
    s
}

/// Writes parameters, configuration and training history under `dir`.
pub fn save_encoder<T: Real>(dir: &Path, encoder: &TrainedEncoder<T>) -> Result<()> {
    let arch = Architecture {
        config: encoder.model.config.clone(),
        feature_index: encoder.model.feature_index.clone(),
        best_epoch: encoder.best_epoch,
    };
    checkpoint::save(dir, &encoder.model.params, serde_json::to_value(&arch)?, None)?;
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    write(CONFIG_FILE, serde_json::to_string_pretty(&encoder.model.config)?)?;
    write(HISTORY_JSON, serde_json::to_string(&encoder.history)?)?;
    write(HISTORY_FILE, history_tsv(&encoder.history))
}

pub fn load_encoder<T: Real>(dir: &Path) -> Result<TrainedEncoder<T>> {
    let loaded = checkpoint::load::<T>(dir)?;
    let arch: Architecture = serde_json::from_value(loaded.architecture)
        .map_err(|e| Error::Invalid(format!("{}: not an encoder checkpoint: {e}", dir.display())))?;
    let model = EncoderModel::with_params(&arch.config, loaded.params, arch.feature_index)?;
    let hp = dir.join(HISTORY_JSON);
    let history = match fs::read_to_string(&hp) {
        Ok(s) => serde_json::from_str(&s)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(Error::io(&hp, e)),
    };
    Ok(TrainedEncoder { model, history, best_epoch: arch.best_epoch })
}
