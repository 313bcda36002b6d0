use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{kfold_split, read_feature_tensor, write_feature_tensor, DatasetManifest, FeatureSequence, Split};
use crate::encoders::{evaluate_raw, load_inputs, TrainedEncoder};
use crate::metrics::{ccc, pcc_matrix, PccMatrix, ReportRow};
use crate::nncore::{Real, Tensor};
use crate::rng::subseed;
use crate::{Error, Result};

use super::grid::{default_c_grid, grid_search_c, GridSearchResult};
use super::svr::{svr_predict, svr_train, SvrModel, SvrParams};

pub const MODEL_FILE: &str = "model.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrConfig {
    pub epsilon: f64,
    /// `None` → γ = 1 / feature dim.
    pub gamma: Option<f64>,
    pub c_grid: Vec<f64>,
    pub folds: usize,
    /// Z-score every feature by training statistics before the kernel.
    pub standardize: bool,
    pub tolerance: f64,
    pub max_iter: Option<usize>,
    pub seed: u64,
}

impl Default for SvrConfig {
    fn default() -> Self {
        SvrConfig {
            epsilon: SvrParams::DEFAULT_EPSILON,
            gamma: None,
            c_grid: default_c_grid(),
            folds: 5,
            standardize: true,
            tolerance: SvrParams::DEFAULT_TOLERANCE,
            max_iter: None,
            seed: 0,
        }
    }
}

impl SvrConfig {
    fn params(&self, d: usize) -> SvrParams {
        SvrParams {
            c: 1.0,
            epsilon: self.epsilon,
            gamma: self.gamma.unwrap_or(1.0 / d.max(1) as f64),
            tolerance: self.tolerance,
            max_iter: self.max_iter,
        }
    }
}

/// Representations of one encoder for a set of utterances (rows in `ids`
/// order).
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSet {
    pub encoder: String,
    pub ids: Vec<String>,
    pub values: Tensor<f64>,
}

/// Per-dimension z-scoring; zero-variance dimensions keep unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &Tensor<f64>) -> Self {
        let (n, d) = (x.rows() as f64, x.cols());
        let mut mean = vec![0.0; d];
        for r in 0..x.rows() {
            mean.iter_mut().zip(x.row(r)).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in 0..x.rows() {
            for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.iter().map(|s| (s / n).sqrt()).map(|s| if s > 0.0 { s } else { 1.0 }).collect();
        Scaler { mean, std }
    }

    pub fn identity(d: usize) -> Self {
        Scaler { mean: vec![0.0; d], std: vec![1.0; d] }
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn apply(&self, x: &Tensor<f64>) -> Tensor<f64> {
        let mut out = Vec::with_capacity(x.len());
        for r in 0..x.rows() {
            out.extend(self.apply_row(x.row(r)));
        }
        Tensor::from_vec(&[x.rows(), x.cols()], out).expect("same shape")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub members: Vec<String>,
    pub member_dims: Vec<usize>,
    pub scaler: Scaler,
    /// Arousal, valence.
    pub svr: [SvrModel; 2],
    pub grid: [GridSearchResult; 2],
}

/// Splits `"VisModel2 + AudModel2"` into member names.
pub fn parse_combination(spec: &str) -> Result<Vec<String>> {
    let members: Vec<String> = spec.split('+').map(|s| s.trim().to_string()).collect();
    if members.iter().any(|m| m.is_empty()) {
        return Err(Error::Invalid(format!("bad combination `{spec}`")));
    }
    let unique: BTreeSet<&String> = members.iter().collect();
    if unique.len() != members.len() {
        return Err(Error::Invalid(format!("combination `{spec}` repeats a member")));
    }
    Ok(members)
}

pub fn combination_name(members: &[String]) -> String {
    members.join(" + ")
}

/// Extracts representations for the utterances of `split`, sorted by id.
pub fn collect_representations<T: Real>(encoder: &TrainedEncoder<T>, manifest: &DatasetManifest, split: Split) -> Result<RepresentationSet> {
    let mut records: Vec<_> = manifest.split(split).collect();
    records.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    let cfg = &encoder.model.config;
    if let Some(r) = records.iter().find(|r| !r.has(cfg.modality())) {
        return Err(Error::MissingModality { id: r.utterance_id.clone(), modality: cfg.modality().name() });
    }
    let raws = load_inputs(cfg, manifest, &records)?;
    let out = evaluate_raw(&encoder.model, &raws)?;
    let d = encoder.model.representation_dim();
    let mut data = Vec::with_capacity(out.len() * d);
    for f in &out {
        data.extend(f.representation.iter().map(|v| v.as_f64()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { epoch: 0, msg: format!("non-finite representation from `{}`", cfg.name) });
    }
    Ok(RepresentationSet {
        encoder: cfg.name.clone(),
        ids: records.iter().map(|r| r.utterance_id.clone()).collect(),
        values: Tensor::from_vec(&[out.len(), d], data)?,
    })
}

/// Concatenates member representations column-wise in member order.
pub fn concat_members(members: &[&RepresentationSet]) -> Result<(Vec<String>, Tensor<f64>, Vec<usize>)> {
    let first = members.first().ok_or_else(|| Error::Invalid("empty combination".into()))?;
    for m in members {
        if m.ids != first.ids {
            return Err(Error::Invalid(format!("`{}` and `{}` cover different utterances", first.encoder, m.encoder)));
        }
    }
    let dims: Vec<usize> = members.iter().map(|m| m.values.cols()).collect();
    let total: usize = dims.iter().sum();
    let n = first.ids.len();
    let mut data = Vec::with_capacity(n * total);
    for r in 0..n {
        for m in members {
            data.extend_from_slice(m.values.row(r));
        }
    }
    Ok((first.ids.clone(), Tensor::from_vec(&[n, total], data)?, dims))
}

struct Labeled {
    targets: [Vec<f64>; 2],
    groups: Vec<String>,
}

fn labels_for(manifest: &DatasetManifest, ids: &[String]) -> Result<Labeled> {
    let mut targets = [Vec::with_capacity(ids.len()), Vec::with_capacity(ids.len())];
    let mut groups = Vec::with_capacity(ids.len());
    for id in ids {
        let r = manifest.get(id).ok_or_else(|| Error::Invalid(format!("utterance `{id}` not in manifest")))?;
        targets[0].push(r.arousal);
        targets[1].push(r.valence);
        groups.push(r.video_id.clone());
    }
    Ok(Labeled { targets, groups })
}

fn grouped_folds(ids: &[String], groups: &[String], k: usize, seed: u64) -> Result<Vec<usize>> {
    let idr: Vec<&str> = ids.iter().map(String::as_str).collect();
    let gr: Vec<&str> = groups.iter().map(String::as_str).collect();
    let f = kfold_split(&idr, &gr, k, seed)?;
    Ok(ids.iter().map(|id| f.fold(id).expect("every id assigned")).collect())
}

/// Scaling, per-target grid search under grouped folds, and the final
/// per-target SVR fit on all rows.
fn fit(x: &Tensor<f64>, y: &[Vec<f64>; 2], ids: &[String], groups: &[String], cfg: &SvrConfig, seed: u64) -> Result<(Scaler, [SvrModel; 2], [GridSearchResult; 2])> {
    let scaler = if cfg.standardize { Scaler::fit(x) } else { Scaler::identity(x.cols()) };
    let xs = scaler.apply(x);
    let folds = grouped_folds(ids, groups, cfg.folds, seed)?;
    let base = cfg.params(x.cols());
    let fit_target = |t: usize| -> Result<(SvrModel, GridSearchResult)> {
        let g = grid_search_c(&xs, &y[t], &cfg.c_grid, &folds, &base)?;
        let m = svr_train(&xs, &y[t], &SvrParams { c: g.chosen, ..base })?;
        Ok((m, g))
    };
    let (ma, ga) = fit_target(0)?;
    let (mv, gv) = fit_target(1)?;
    Ok((scaler, [ma, mv], [ga, gv]))
}

/// Trains a fusion model on training-split representations.
pub fn fuse_train_representations(members: &[&RepresentationSet], manifest: &DatasetManifest, cfg: &SvrConfig) -> Result<FusionModel> {
    let (ids, x, dims) = concat_members(members)?;
    let lab = labels_for(manifest, &ids)?;
    let (scaler, svr, grid) = fit(&x, &lab.targets, &ids, &lab.groups, cfg, subseed(cfg.seed, "fusion-train"))?;
    Ok(FusionModel { members: members.iter().map(|m| m.encoder.clone()).collect(), member_dims: dims, scaler, svr, grid })
}

pub fn fuse_train<T: Real>(encoders: &[&TrainedEncoder<T>], manifest: &DatasetManifest, cfg: &SvrConfig) -> Result<FusionModel> {
    let reps = encoders
        .iter()
        .map(|e| collect_representations(e, manifest, Split::Train))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&RepresentationSet> = reps.iter().collect();
    fuse_train_representations(&refs, manifest, cfg)
}

/// Predicts (arousal, valence) from one concatenated representation row.
pub fn fusion_predict(model: &FusionModel, features: &[f64]) -> Result<[f64; 2]> {
    let expected: usize = model.member_dims.iter().sum();
    if features.len() != expected {
        return Err(Error::Shape(format!("fusion expects {expected} features, got {}", features.len())));
    }
    let x = model.scaler.apply_row(features);
    Ok([svr_predict(&model.svr[0], &x)?, svr_predict(&model.svr[1], &x)?])
}

/// Out-of-fold predictions and CCC of one combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationResult {
    pub name: String,
    pub members: Vec<String>,
    pub ccc: [f64; 2],
    pub mean_ccc: f64,
    /// C chosen in each outer fold, per target.
    pub chosen_c: [Vec<f64>; 2],
    pub ids: Vec<String>,
    pub predictions: [Vec<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    /// Sorted by mean CCC, best first (ties keep input order).
    pub rows: Vec<CombinationResult>,
    /// Pearson correlations between single-encoder out-of-fold predictions.
    pub pcc: [PccMatrix; 2],
}

impl FusionReport {
    pub fn table_rows(&self) -> Vec<ReportRow> {
        self.rows.iter().map(|r| ReportRow::new(r.name.clone(), r.ccc[0], r.ccc[1])).collect()
    }
}

/// Grouped k-fold CV of one member combination over the `eval`
/// utterances. Every outer training fold is augmented with all `train`
/// rows (pass an empty slice for plain CV); scaling and the C grid search
/// are redone inside each outer fold, and CCC is computed over the pooled
/// out-of-fold predictions.
pub fn cross_validate(train: &[&RepresentationSet], eval: &[&RepresentationSet], manifest: &DatasetManifest, cfg: &SvrConfig) -> Result<CombinationResult> {
    let (ids, x, _) = concat_members(eval)?;
    let lab = labels_for(manifest, &ids)?;
    let (tids, tx, tlab) = if train.is_empty() {
        (Vec::new(), Tensor::zeros(&[0, x.cols()]), Labeled { targets: [Vec::new(), Vec::new()], groups: Vec::new() })
    } else {
        let (tids, tx, _) = concat_members(train)?;
        if tx.cols() != x.cols() {
            return Err(Error::Shape("train and eval representations differ in width".into()));
        }
        if let Some(id) = tids.iter().find(|id| ids.contains(id)) {
            return Err(Error::Invalid(format!("utterance `{id}` is in both the training pool and the evaluated set")));
        }
        let tlab = labels_for(manifest, &tids)?;
        (tids, tx, tlab)
    };
    let outer = grouped_folds(&ids, &lab.groups, cfg.folds, subseed(cfg.seed, "fusion-outer"))?;
    let n = ids.len();
    let mut preds = [vec![0.0; n], vec![0.0; n]];
    let mut chosen = [Vec::new(), Vec::new()];
    for f in 0..cfg.folds {
        let fit_rows: Vec<usize> = (0..n).filter(|&i| outer[i] != f).collect();
        let held: Vec<usize> = (0..n).filter(|&i| outer[i] == f).collect();
        let mut pool_ids = tids.clone();
        let mut pool_groups = tlab.groups.clone();
        let mut pool_y = tlab.targets.clone();
        let mut data = tx.data().to_vec();
        for &i in &fit_rows {
            pool_ids.push(ids[i].clone());
            pool_groups.push(lab.groups[i].clone());
            pool_y[0].push(lab.targets[0][i]);
            pool_y[1].push(lab.targets[1][i]);
            data.extend_from_slice(x.row(i));
        }
        let px = Tensor::from_vec(&[pool_ids.len(), x.cols()], data)?;
        let (scaler, svr, grid) = fit(&px, &pool_y, &pool_ids, &pool_groups, cfg, subseed(cfg.seed, "fusion-inner"))?;
        for &i in &held {
            let row = scaler.apply_row(x.row(i));
            for t in 0..2 {
                preds[t][i] = svr_predict(&svr[t], &row)?;
            }
        }
        for t in 0..2 {
            chosen[t].push(grid[t].chosen);
        }
    }
    let c = [ccc(&preds[0], &lab.targets[0])?, ccc(&preds[1], &lab.targets[1])?];
    let names: Vec<String> = eval.iter().map(|m| m.encoder.clone()).collect();
    Ok(CombinationResult {
        name: combination_name(&names),
        members: names,
        ccc: c,
        mean_ccc: (c[0] + c[1]) / 2.0,
        chosen_c: chosen,
        ids,
        predictions: preds,
    })
}

/// Representations per encoder name: an optional always-in-training pool
/// (typically the training split) and the evaluated utterances (typically
/// the validation split).
#[derive(Debug, Clone, Default)]
pub struct RepresentationPool {
    pub train: BTreeMap<String, RepresentationSet>,
    pub eval: BTreeMap<String, RepresentationSet>,
}

impl RepresentationPool {
    fn members<'a>(&'a self, combo: &[String]) -> Result<(Vec<&'a RepresentationSet>, Vec<&'a RepresentationSet>)> {
        let eval = combo
            .iter()
            .map(|n| self.eval.get(n).ok_or_else(|| Error::Invalid(format!("no representations for encoder `{n}`"))))
            .collect::<Result<Vec<_>>>()?;
        let train: Vec<_> = combo.iter().filter_map(|n| self.train.get(n)).collect();
        if !train.is_empty() && train.len() != combo.len() {
            return Err(Error::Invalid("training representations missing for some members".into()));
        }
        Ok((train, eval))
    }
}

/// Evaluates every combination with [`cross_validate`], plus a PCC matrix
/// over the single-encoder out-of-fold predictions of all encoders involved.
pub fn fuse_evaluate(combinations: &[Vec<String>], pool: &RepresentationPool, manifest: &DatasetManifest, cfg: &SvrConfig) -> Result<FusionReport> {
    if combinations.is_empty() {
        return Err(Error::Invalid("no combinations to evaluate".into()));
    }
    let run = |combo: &[String]| -> Result<CombinationResult> {
        let (train, eval) = pool.members(combo)?;
        cross_validate(&train, &eval, manifest, cfg)
    };
    let mut rows = Vec::with_capacity(combinations.len());
    let mut singles: BTreeMap<String, CombinationResult> = BTreeMap::new();
    for combo in combinations {
        let r = run(combo)?;
        if combo.len() == 1 {
            singles.insert(combo[0].clone(), r.clone());
        }
        rows.push(r);
    }
    // Encoders in first-appearance order.
    let mut order: Vec<&String> = Vec::new();
    for combo in combinations {
        for m in combo {
            if !order.contains(&m) {
                order.push(m);
            }
        }
    }
    for name in &order {
        if !singles.contains_key(*name) {
            singles.insert((*name).clone(), run(std::slice::from_ref(*name))?);
        }
    }
    let matrix = |t: usize| {
        let preds: Vec<(String, Vec<f64>)> = order.iter().map(|n| ((*n).clone(), singles[*n].predictions[t].clone())).collect();
        pcc_matrix(&preds)
    };
    let pcc = [matrix(0)?, matrix(1)?];
    rows.sort_by(|a, b| b.mean_ccc.total_cmp(&a.mean_ccc));
    Ok(FusionReport { rows, pcc })
}

#[derive(Serialize, Deserialize)]
struct StoredSvr {
    c: f64,
    epsilon: f64,
    gamma: f64,
    bias: f64,
    dual_coefs: Vec<f64>,
    /// AFF1 file with the support vectors; absent when there are none.
    support_vectors: Option<String>,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct StoredFusion {
    members: Vec<String>,
    member_dims: Vec<usize>,
    scaler: Scaler,
    arousal: StoredSvr,
    valence: StoredSvr,
    grid: [GridSearchResult; 2],
}

/// Writes `model.json` plus one AFF1 support-vector file per target.
/// Support vectors are stored in single precision.
pub fn save_fusion(dir: &Path, model: &FusionModel) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let store = |t: usize, name: &str| -> Result<StoredSvr> {
        let m = &model.svr[t];
        let file = if m.dual_coefs.is_empty() {
            None
        } else {
            let f = format!("support_vectors_{name}.aff");
            let sv = &m.support_vectors;
            let data = sv.data().iter().map(|&v| v as f32).collect();
            write_feature_tensor(&dir.join(&f), &FeatureSequence::from_rows(sv.rows(), sv.cols(), data)?)?;
            Some(f)
        };
        Ok(StoredSvr {
            c: m.c,
            epsilon: m.epsilon,
            gamma: m.gamma,
            bias: m.bias,
            dual_coefs: m.dual_coefs.clone(),
            support_vectors: file,
            dim: m.support_vectors.cols(),
        })
    };
    let stored = StoredFusion {
        members: model.members.clone(),
        member_dims: model.member_dims.clone(),
        scaler: model.scaler.clone(),
        arousal: store(0, "arousal")?,
        valence: store(1, "valence")?,
        grid: model.grid.clone(),
    };
    let p = dir.join(MODEL_FILE);
    fs::write(&p, serde_json::to_string_pretty(&stored)?).map_err(|e| Error::io(&p, e))
}

pub fn load_fusion(dir: &Path) -> Result<FusionModel> {
    let p = dir.join(MODEL_FILE);
    let s: StoredFusion = serde_json::from_str(&fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)?;
    let restore = |st: StoredSvr| -> Result<SvrModel> {
        let sv = match &st.support_vectors {
            Some(f) => {
                let seq = read_feature_tensor(&dir.join(f))?;
                Tensor::from_vec(&[seq.frames(), seq.dim()], seq.flat())?
            }
            None => Tensor::zeros(&[0, st.dim]),
        };
        if sv.rows() != st.dual_coefs.len() || sv.cols() != st.dim {
            return Err(Error::Shape("support vectors do not match coefficients".into()));
        }
        Ok(SvrModel { support_vectors: sv, dual_coefs: st.dual_coefs, bias: st.bias, gamma: st.gamma, c: st.c, epsilon: st.epsilon })
    };
    Ok(FusionModel {
        members: s.members,
        member_dims: s.member_dims,
        scaler: s.scaler,
        svr: [restore(s.arousal)?, restore(s.valence)?],
        grid: s.grid,
    })
}
