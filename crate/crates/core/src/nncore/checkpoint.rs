//! Parameter checkpoints: one AFF1 file per named tensor plus a JSON index
//! holding the architecture descriptor and optimizer state.
//!
//! AFF1 stores single precision, so double-precision parameters are rounded
//! on save.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::{OptimizerConfig, OptimizerState};
use super::params::ParamSet;
use super::real::Real;
use super::tensor::Tensor;
use crate::dataio::{read_feature_tensor, write_feature_tensor, FeatureSequence};
use crate::{Error, Result};

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerEntry {
    pub config: OptimizerConfig,
    pub step: u64,
    pub slot1: Vec<TensorEntry>,
    pub slot2: Vec<TensorEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointIndex {
    pub architecture: serde_json::Value,
    pub params: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerEntry>,
}

fn write_tensor<T: Real>(dir: &Path, file: String, name: &str, t: &Tensor<T>) -> Result<TensorEntry> {
    let seq = FeatureSequence::from_tensor(t)?;
    write_feature_tensor(&dir.join(&file), &seq)?;
    Ok(TensorEntry { name: name.to_string(), file, shape: t.shape().to_vec() })
}

fn read_tensor<T: Real>(dir: &Path, e: &TensorEntry) -> Result<Tensor<T>> {
    let seq = read_feature_tensor(&dir.join(&e.file))?;
    Tensor::from_vec(&e.shape, seq.flat())
}

pub fn save<T: Real>(
    dir: &Path,
    params: &ParamSet<T>,
    architecture: serde_json::Value,
    optimizer: Option<&OptimizerState<T>>,
) -> Result<()> {
    let pdir = dir.join("params");
    fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
    let mut entries = Vec::new();
    for (name, t) in params.iter() {
        entries.push(write_tensor(dir, format!("params/{name}.aff"), name, t)?);
    }
    let optimizer = match optimizer {
        None => None,
        Some(st) => {
            let mut slots = [Vec::new(), Vec::new()];
            for (k, bufs) in [&st.slot1, &st.slot2].into_iter().enumerate() {
                for (name, t) in params.names().iter().zip(bufs) {
                    slots[k].push(write_tensor(dir, format!("params/opt{}.{name}.aff", k + 1), name, t)?);
                }
            }
            let [slot1, slot2] = slots;
            Some(OptimizerEntry { config: st.config, step: st.step, slot1, slot2 })
        }
    };
    let index = CheckpointIndex { architecture, params: entries, optimizer };
    let path = dir.join(INDEX_FILE);
    fs::write(&path, serde_json::to_string_pretty(&index)?).map_err(|e| Error::io(&path, e))
}

pub struct Loaded<T> {
    pub params: ParamSet<T>,
    pub architecture: serde_json::Value,
    pub optimizer: Option<OptimizerState<T>>,
}

pub fn load<T: Real>(dir: &Path) -> Result<Loaded<T>> {
    let path = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: CheckpointIndex = serde_json::from_str(&text)?;
    let mut params = ParamSet::new();
    for e in &index.params {
        params.add(e.name.clone(), read_tensor(dir, e)?);
    }
    let optimizer = match &index.optimizer {
        None => None,
        Some(o) => Some(OptimizerState {
            config: o.config,
            step: o.step,
            slot1: o.slot1.iter().map(|e| read_tensor(dir, e)).collect::<Result<_>>()?,
            slot2: o.slot2.iter().map(|e| read_tensor(dir, e)).collect::<Result<_>>()?,
        }),
    };
    Ok(Loaded { params, architecture: index.architecture, optimizer })
}
