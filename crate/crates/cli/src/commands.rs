use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use affect_core::dataio::{parse_manifest, DatasetManifest, Modality, Split};
use affect_core::encoders::{evaluate_raw, load_encoder, load_inputs, save_encoder, train_encoder, EncoderConfig, TrainedEncoder, CONFIG_FILE};
use affect_core::fusion::{
    collect_representations, combination_name, cross_validate, fuse_train_representations, parse_combination, save_fusion,
    CombinationResult, RepresentationSet, SvrConfig,
};
use affect_core::metrics::{ccc, ReportRow};
use affect_core::nncore::{Real, Tensor};
use affect_core::rng::subseed;
use affect_core::selftest::{run_all, SelftestOptions};
use affect_core::Error;
use serde::{Deserialize, Serialize};

use crate::{read_json, sorted_subdirs, write_json, CliError, CliResult, Precision, RunConfig, ENCODERS_DIR, EVALUATION_FILE, ROW_FILE};

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        writeln!($out, $($arg)*).map_err(|e| crate::io_err(std::path::Path::new("<stdout>"), e))?
    };
}

// ---------------------------------------------------------------- validate

const HIST_BINS: usize = 10;

fn histogram(values: &[f64], (lo, hi): (f64, f64)) -> Vec<usize> {
    let mut h = vec![0; HIST_BINS];
    for &v in values {
        let b = (((v - lo) / (hi - lo)) * HIST_BINS as f64).floor();
        h[(b.max(0.0) as usize).min(HIST_BINS - 1)] += 1;
    }
    h
}

/// Parses the manifest and reads every referenced tensor. Feature widths
/// must agree across records of the same modality.
pub fn cmd_validate(manifest_path: &Path, out: &mut dyn Write) -> CliResult<DatasetManifest> {
    let m = parse_manifest(manifest_path)?;
    say!(out, "manifest {}: {} records", manifest_path.display(), m.records.len());
    for split in [Split::Train, Split::Validation, Split::Test] {
        let n = m.split(split).count();
        if n > 0 {
            say!(out, "  {split:?}: {n}");
        }
    }
    for modality in Modality::ALL {
        let mut count = 0;
        let mut width: Option<(usize, &str)> = None;
        for r in m.records.iter().filter(|r| r.has(modality)) {
            let seq = m.load(r, modality)?;
            count += 1;
            match width {
                None => width = Some((seq.dim(), &r.utterance_id)),
                Some((w, first)) if w != seq.dim() => {
                    return Err(Error::Shape(format!(
                        "record `{}`: {} features are {}-D but `{first}` has {w}-D",
                        r.utterance_id,
                        modality.name(),
                        seq.dim()
                    ))
                    .into());
                }
                _ => {}
            }
        }
        if let Some((w, _)) = width {
            say!(out, "  {:<10} {count} records, {w}-D", modality.name());
        }
    }
    let ranges = [("arousal", m.label_ranges.arousal), ("valence", m.label_ranges.valence)];
    for (t, (name, range)) in ranges.into_iter().enumerate() {
        let values: Vec<f64> = m.records.iter().map(|r| r.label(t)).collect();
        let h = histogram(&values, range);
        say!(out, "  {name} histogram over [{}, {}]: {h:?}", range.0, range.1);
    }
    say!(out, "ok");
    Ok(m)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderEvaluation {
    pub encoder: String,
    pub precision: Precision,
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
    pub train_ccc: [Option<f64>; 2],
    pub validation_ccc: [Option<f64>; 2],
    /// Validation utterances, sorted by id.
    pub ids: Vec<String>,
    /// Validation head outputs per target; `None` for targets the head does
    /// not predict.
    pub predictions: [Option<Vec<f64>>; 2],
}

pub(crate) fn split_outputs<T: Real>(enc: &TrainedEncoder<T>, m: &DatasetManifest, split: Split) -> CliResult<(Vec<String>, [Option<Vec<f64>>; 2], [Option<f64>; 2])> {
    let mut records: Vec<_> = m.split(split).collect();
    records.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    let ids = records.iter().map(|r| r.utterance_id.clone()).collect();
    let mut preds: [Option<Vec<f64>>; 2] = [None, None];
    let mut scores = [None, None];
    if records.is_empty() {
        return Ok((ids, preds, scores));
    }
    let raws = load_inputs(&enc.model.config, m, &records)?;
    let outs = evaluate_raw(&enc.model, &raws)?;
    for (k, &t) in enc.model.config.head.targets().iter().enumerate() {
        let p: Vec<f64> = outs.iter().map(|o| o.output[k].as_f64()).collect();
        let y: Vec<f64> = records.iter().map(|r| r.label(t)).collect();
        scores[t] = ccc(&p, &y).ok();
        preds[t] = Some(p);
    }
    Ok((ids, preds, scores))
}

fn fmt_ccc(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

fn train_one<T: Real>(run: &RunConfig, cfg: &EncoderConfig, m: &DatasetManifest, out: &mut dyn Write) -> CliResult<EncoderEvaluation> {
    let enc = train_encoder::<T>(cfg, m)?;
    let dir = run.encoder_dir(&cfg.name);
    save_encoder(&dir, &enc)?;
    let (_, _, train_ccc) = split_outputs(&enc, m, Split::Train)?;
    let (ids, predictions, validation_ccc) = split_outputs(&enc, m, Split::Validation)?;
    let eval = EncoderEvaluation {
        encoder: cfg.name.clone(),
        precision: run.precision,
        best_epoch: enc.best_epoch,
        epochs_run: enc.history.len(),
        train_ccc,
        validation_ccc,
        ids,
        predictions,
    };
    write_json(&dir.join(EVALUATION_FILE), &eval)?;
    say!(
        out,
        "{}: {} epochs (best {}); train CCC arousal {} valence {}; validation CCC arousal {} valence {}",
        cfg.name,
        eval.epochs_run,
        eval.best_epoch.map_or_else(|| "-".into(), |e| e.to_string()),
        fmt_ccc(train_ccc[0]),
        fmt_ccc(train_ccc[1]),
        fmt_ccc(validation_ccc[0]),
        fmt_ccc(validation_ccc[1])
    );
    Ok(eval)
}

/// Trains every encoder in `run.encoder_configs`, in order.
pub fn cmd_train(run: &RunConfig, out: &mut dyn Write) -> CliResult<Vec<EncoderEvaluation>> {
    if run.encoder_configs.is_empty() {
        return Err(CliError::Usage("train needs at least one --config".into()));
    }
    let m = parse_manifest(run.manifest_path()?)?;
    let mut evals = Vec::new();
    for path in &run.encoder_configs {
        let mut cfg: EncoderConfig = read_json(path)?;
        if let Some(seed) = run.seed {
            cfg.seed = subseed(seed, &format!("encoder/{}", cfg.name));
        }
        cfg.validate()?;
        evals.push(match run.precision {
            Precision::F32 => train_one::<f32>(run, &cfg, &m, out)?,
            Precision::F64 => train_one::<f64>(run, &cfg, &m, out)?,
        });
    }
    Ok(evals)
}

// ---------------------------------------------------------------- extract

#[derive(Serialize, Deserialize)]
struct StoredRepresentations {
    encoder: String,
    split: Split,
    ids: Vec<String>,
    values: Vec<Vec<f64>>,
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Validation => "validation",
        Split::Test => "test",
    }
}

fn representation_file(run: &RunConfig, name: &str, split: Split) -> std::path::PathBuf {
    run.encoder_dir(name).join(format!("representations_{}.json", split_name(split)))
}

fn load_trained<T: Real>(run: &RunConfig, name: &str) -> CliResult<TrainedEncoder<T>> {
    let dir = run.encoder_dir(name);
    if !dir.join(CONFIG_FILE).is_file() {
        return Err(CliError::Usage(format!("no trained encoder `{name}` in {}", dir.display())));
    }
    Ok(load_encoder::<T>(&dir)?)
}

fn compute_representations(run: &RunConfig, name: &str, m: &DatasetManifest, split: Split) -> CliResult<RepresentationSet> {
    Ok(match run.precision {
        Precision::F32 => collect_representations(&load_trained::<f32>(run, name)?, m, split)?,
        Precision::F64 => collect_representations(&load_trained::<f64>(run, name)?, m, split)?,
    })
}

/// Representations of one split: from `extract` output when present,
/// otherwise computed from the checkpoint.
fn representations(run: &RunConfig, name: &str, m: &DatasetManifest, split: Split) -> CliResult<RepresentationSet> {
    let path = representation_file(run, name, split);
    if !path.is_file() {
        return compute_representations(run, name, m, split);
    }
    let s: StoredRepresentations = read_json(&path)?;
    let d = s.values.first().map_or(0, Vec::len);
    let rows = s.values.len();
    let values = Tensor::from_vec(&[rows, d], s.values.into_iter().flatten().collect())?;
    Ok(RepresentationSet { encoder: s.encoder, ids: s.ids, values })
}

/// Writes train and validation representations of the named encoders (all
/// trained encoders when `names` is empty).
pub fn cmd_extract(run: &RunConfig, names: &[String], out: &mut dyn Write) -> CliResult<()> {
    let m = parse_manifest(run.manifest_path()?)?;
    let names: Vec<String> = if names.is_empty() {
        sorted_subdirs(&run.out.join(ENCODERS_DIR))?
            .iter()
            .filter(|d| d.join(CONFIG_FILE).is_file())
            .filter_map(|d| d.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect()
    } else {
        names.to_vec()
    };
    if names.is_empty() {
        return Err(CliError::Usage(format!("no trained encoders in {}", run.out.display())));
    }
    for name in &names {
        for split in [Split::Train, Split::Validation] {
            if m.split(split).next().is_none() {
                continue;
            }
            let set = compute_representations(run, name, &m, split)?;
            let stored = StoredRepresentations {
                encoder: set.encoder.clone(),
                split,
                ids: set.ids.clone(),
                values: (0..set.values.rows()).map(|r| set.values.row(r).to_vec()).collect(),
            };
            write_json(&representation_file(run, name, split), &stored)?;
            say!(out, "{name}: {} {} representations of width {}", set.ids.len(), split_name(split), set.values.cols());
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- fuse

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionEvaluation {
    pub row: ReportRow,
    /// Grouped-CV result over the validation utterances, with the training
    /// split always in the SVR training pool.
    pub cross_validation: CombinationResult,
    /// C of the persisted model (fitted on the training split), per target.
    pub model_c: [f64; 2],
    pub svr: SvrConfig,
}

/// Fits and evaluates every combination in `run.combinations`.
pub fn cmd_fuse(run: &RunConfig, out: &mut dyn Write) -> CliResult<Vec<FusionEvaluation>> {
    if run.combinations.is_empty() {
        return Err(CliError::Usage("fuse needs at least one combination".into()));
    }
    let m = parse_manifest(run.manifest_path()?)?;
    let base: SvrConfig = match &run.fusion_config {
        Some(p) => read_json(p)?,
        None => SvrConfig::default(),
    };
    let mut cache: BTreeMap<(String, bool), RepresentationSet> = BTreeMap::new();
    let mut results = Vec::new();
    for spec in &run.combinations {
        let members = parse_combination(spec)?;
        let name = combination_name(&members);
        let mut cfg = base.clone();
        if let Some(seed) = run.seed {
            cfg.seed = subseed(seed, &format!("fusion/{}", members.join("+")));
        }
        for mem in &members {
            for (split, is_train) in [(Split::Train, true), (Split::Validation, false)] {
                if !cache.contains_key(&(mem.clone(), is_train)) {
                    let set = representations(run, mem, &m, split)?;
                    cache.insert((mem.clone(), is_train), set);
                }
            }
        }
        let train: Vec<&RepresentationSet> = members.iter().map(|n| &cache[&(n.clone(), true)]).collect();
        let eval: Vec<&RepresentationSet> = members.iter().map(|n| &cache[&(n.clone(), false)]).collect();
        let model = fuse_train_representations(&train, &m, &cfg)?;
        let cv = cross_validate(&train, &eval, &m, &cfg)?;
        let dir = run.fusion_dir(&members);
        save_fusion(&dir, &model)?;
        let row = ReportRow::new(name.clone(), cv.ccc[0], cv.ccc[1]);
        let evaluation = FusionEvaluation { row: row.clone(), cross_validation: cv, model_c: [model.grid[0].chosen, model.grid[1].chosen], svr: cfg };
        write_json(&dir.join(EVALUATION_FILE), &evaluation)?;
        write_json(&dir.join(ROW_FILE), &row)?;
        say!(out, "{name}: CCC arousal {:.3} valence {:.3} mean {:.3}", row.arousal_ccc, row.valence_ccc, row.mean_ccc);
        results.push(evaluation);
    }
    Ok(results)
}

// ---------------------------------------------------------------- report

pub fn cmd_report(run_dir: &Path, out: &mut dyn Write) -> CliResult<crate::report::RunReport> {
    let report = crate::report::aggregate(run_dir)?;
    crate::report::write(run_dir, &report)?;
    write!(out, "{}", report.single_table()).map_err(|e| crate::io_err(Path::new("<stdout>"), e))?;
    if !report.multi.is_empty() {
        say!(out, "");
        write!(out, "{}", report.multi_table()).map_err(|e| crate::io_err(Path::new("<stdout>"), e))?;
    }
    Ok(report)
}

// ---------------------------------------------------------------- selftest

pub fn cmd_selftest(opts: &SelftestOptions, out: &mut dyn Write) -> CliResult<()> {
    let reports = run_all(opts);
    for r in &reports {
        say!(out, "{r}");
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    if failed.is_empty() {
        say!(out, "all suites passed");
        Ok(())
    } else {
        Err(CliError::Selftest(format!("failing suite(s): {}", failed.join(", "))))
    }
}
