//! Training-choice ablations on one encoder configuration: loss function,
//! sequence augmentation, and independent vs multitask heads. Each row is
//! the validation CCC of the kept (best-epoch) model's own head.

use affect_core::dataio::{DatasetManifest, Split};
use affect_core::encoders::{train_encoder, Augmentation, EncoderConfig, Head};
use affect_core::nncore::{LossKind, LossSpec};
use serde::{Deserialize, Serialize};

use crate::commands::split_outputs;
use crate::report::format_rows;
use crate::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub ccc: [Option<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub title: String,
    /// Heading of the first column ("Loss", "Augmentation", …).
    pub header: String,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_text(&self) -> String {
        let rows: Vec<_> = self.rows.iter().map(|r| (r.name.clone(), r.ccc[0], r.ccc[1])).collect();
        format_rows(&self.title, &self.header, &rows, false)
    }
}

fn validation_ccc(cfg: &EncoderConfig, m: &DatasetManifest) -> CliResult<[Option<f64>; 2]> {
    let enc = train_encoder::<f64>(cfg, m)?;
    Ok(split_outputs(&enc, m, Split::Validation)?.2)
}

/// MSE, MAE, CCC + MSE and CCC + MAE.
pub fn loss_ablation(base: &EncoderConfig, m: &DatasetManifest) -> CliResult<AblationTable> {
    let variants = [("MSE", LossKind::Mse), ("MAE", LossKind::Mae), ("CCC + MSE", LossKind::CccPlusMse), ("CCC + MAE", LossKind::CccPlusMae)];
    let mut rows = Vec::new();
    for (name, kind) in variants {
        let mut cfg = base.clone();
        cfg.loss = LossSpec::new(kind);
        rows.push(AblationRow { name: name.into(), ccc: validation_ccc(&cfg, m)? });
    }
    Ok(AblationTable { title: "Loss ablation (validation CCC)".into(), header: "Loss".into(), rows })
}

/// No augmentation, SSA and CSA with a `csa_window`-frame window.
pub fn augmentation_ablation(base: &EncoderConfig, m: &DatasetManifest, csa_window: usize) -> CliResult<AblationTable> {
    let variants = [("No", Augmentation::None), ("SSA", Augmentation::Ssa), ("CSA", Augmentation::Csa { window: csa_window })];
    let mut rows = Vec::new();
    for (name, aug) in variants {
        let mut cfg = base.clone();
        cfg.augmentation = aug;
        rows.push(AblationRow { name: name.into(), ccc: validation_ccc(&cfg, m)? });
    }
    Ok(AblationTable { title: "Augmentation ablation (validation CCC)".into(), header: "Augmentation".into(), rows })
}

/// Two single-target models against one multitask model.
pub fn head_ablation(base: &EncoderConfig, m: &DatasetManifest) -> CliResult<AblationTable> {
    let with_head = |h: Head| {
        let mut cfg = base.clone();
        cfg.head = h;
        cfg
    };
    let arousal = validation_ccc(&with_head(Head::IndependentArousal), m)?[0];
    let valence = validation_ccc(&with_head(Head::IndependentValence), m)?[1];
    let multi = validation_ccc(&with_head(Head::Multitask), m)?;
    Ok(AblationTable {
        title: "Independent vs multitask learning (validation CCC)".into(),
        header: "Learning Scheme".into(),
        rows: vec![AblationRow { name: "Independent".into(), ccc: [arousal, valence] }, AblationRow { name: "Multi-task".into(), ccc: multi }],
    })
}
