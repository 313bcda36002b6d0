use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{DatasetManifest, FeatureSelector, FeatureSequence, PearsonSelector, Split, UtteranceRecord};
use crate::metrics::ccc;
use crate::nncore::{loss_eval, OptimizerState, ParamSet, Real, Tensor};
use crate::rng::{rng_from_seed, subseed};
use crate::{Error, Result};

use super::config::{ArchConfig, EncoderConfig};
use super::model::{build_encoder, EncoderModel, ForwardOutput, ModelInput};
use super::prepare::{load_inputs, prepare_input, Phase};

/// Samples whose gradients are accumulated sequentially before the
/// per-block sums are added in order; keeps results independent of the
/// thread count.
const GRAD_BLOCK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    /// CCC of the predictions made while training, per target (arousal,
    /// valence); `None` for targets the head does not predict or when
    /// undefined.
    pub train_ccc: [Option<f64>; 2],
    pub val_ccc: [Option<f64>; 2],
}

#[derive(Debug, Clone)]
pub struct TrainedEncoder<T> {
    pub model: EncoderModel<T>,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (best mean validation CCC).
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub arousal: Option<f64>,
    pub valence: Option<f64>,
}

impl Prediction {
    pub fn target(&self, t: usize) -> Option<f64> {
        if t == 0 {
            self.arousal
        } else {
            self.valence
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub encoder: String,
    pub values: Vec<f64>,
}

fn sorted_split<'a>(manifest: &'a DatasetManifest, split: Split) -> Vec<&'a UtteranceRecord> {
    let mut v: Vec<_> = manifest.split(split).collect();
    v.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    v
}

fn mean_ccc(c: &[Option<f64>; 2], targets: &[usize]) -> f64 {
    let mut s = 0.0;
    for &t in targets {
        match c[t] {
            Some(v) => s += v,
            None => return f64::NEG_INFINITY,
        }
    }
    s / targets.len() as f64
}

fn target_ccc(preds: &[Vec<f64>], truth: &[[f64; 2]], targets: &[usize]) -> [Option<f64>; 2] {
    let mut out = [None, None];
    for (k, &t) in targets.iter().enumerate() {
        let p: Vec<f64> = preds.iter().map(|r| r[k]).collect();
        let y: Vec<f64> = truth.iter().map(|r| r[t]).collect();
        out[t] = ccc(&p, &y).ok();
    }
    out
}

/// Forward passes over `inputs`, in input order.
fn forward_all<T: Real>(model: &EncoderModel<T>, inputs: &[ModelInput<T>]) -> Result<Vec<ForwardOutput<T>>> {
    inputs.par_iter().map(|i| model.forward(i)).collect()
}

/// Deterministic evaluation (no augmentation) of raw tensors.
pub fn evaluate_raw<T: Real>(model: &EncoderModel<T>, raws: &[FeatureSequence]) -> Result<Vec<ForwardOutput<T>>> {
    let mut rng = rng_from_seed(0);
    let inputs = raws
        .iter()
        .map(|r| prepare_input(&model.config, r, Phase::Eval, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    forward_all(model, &inputs)
}

fn select_columns(config: &EncoderConfig, raws: &[FeatureSequence], truth: &[[f64; 2]]) -> Result<Option<Vec<usize>>> {
    let ArchConfig::AudMlp { select_k: Some(k), .. } = config.arch else {
        return Ok(None);
    };
    let d = config.input_dim;
    let mut data = Vec::with_capacity(raws.len() * d);
    for r in raws {
        if r.rank() != 1 || r.dim() != d {
            return Err(Error::Shape(format!("expected {d}-D feature vectors, got {}×{}", r.frames(), r.dim())));
        }
        data.extend(r.data().iter().map(|&v| v as f64));
    }
    let x = Tensor::from_vec(&[raws.len(), d], data)?;
    let ys: Vec<Vec<f64>> = config.head.targets().iter().map(|&t| truth.iter().map(|y| y[t]).collect()).collect();
    let refs: Vec<&[f64]> = ys.iter().map(|v| v.as_slice()).collect();
    Ok(Some(PearsonSelector.select(&x, &refs, k)?))
}

/// Splits a shuffled order into batches; a trailing batch of one sample is
/// merged into the previous one so batch statistics stay defined.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().map_or(false, |b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

/// Trains an encoder on the manifest's training split, tracking validation
/// CCC after every epoch and keeping the best-scoring parameters.
pub fn train_encoder<T: Real>(config: &EncoderConfig, manifest: &DatasetManifest) -> Result<TrainedEncoder<T>> {
    config.validate()?;
    let mut model: EncoderModel<T> = build_encoder(config, &mut rng_from_seed(subseed(config.seed, "init")))?;
    let targets = config.head.targets();

    let train = sorted_split(manifest, Split::Train);
    if train.is_empty() {
        return Err(Error::Invalid("manifest has no training utterances".into()));
    }
    let val = sorted_split(manifest, Split::Validation);
    let train_raw = load_inputs(config, manifest, &train)?;
    let val_raw = load_inputs(config, manifest, &val)?;
    let label = |r: &&UtteranceRecord| [r.arousal, r.valence];
    let train_y: Vec<[f64; 2]> = train.iter().map(label).collect();
    let val_y: Vec<[f64; 2]> = val.iter().map(label).collect();

    if let Some(idx) = select_columns(config, &train_raw, &train_y)? {
        model.feature_index = Some(idx);
    }

    let mut opt = OptimizerState::new(config.optimizer.clone(), &model.params);
    let mut rng = rng_from_seed(subseed(config.seed, "train"));
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ParamSet<T>)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let lr = config.optimizer.learning_rate(opt.step);
        let mut loss_sum = 0.0;
        let mut seen_pred: Vec<Vec<f64>> = Vec::with_capacity(train.len());
        let mut seen_y = Vec::with_capacity(train.len());
        for batch in batches(&order, config.batch_size) {
            let inputs = batch
                .iter()
                .map(|&i| prepare_input(config, &train_raw[i], Phase::Train, &mut rng))
                .collect::<Result<Vec<ModelInput<T>>>>()?;
            let fwd = forward_all(&model, &inputs)?;
            let k = targets.len();
            let mut pred = Tensor::zeros(&[batch.len(), k]);
            let mut truth = Tensor::zeros(&[batch.len(), k]);
            for (r, (&i, f)) in batch.iter().zip(&fwd).enumerate() {
                pred.row_mut(r).copy_from_slice(&f.output);
                for (c, &t) in targets.iter().enumerate() {
                    truth.set(r, c, T::lit(train_y[i][t]));
                }
                seen_pred.push(f.output.iter().map(|v| v.as_f64()).collect());
                seen_y.push(train_y[i]);
            }
            let (loss, grad) = loss_eval(&pred, &truth, &config.loss)?;
            if !loss.as_f64().is_finite() {
                return Err(Error::Divergence { epoch, msg: "non-finite training loss".into() });
            }
            loss_sum += loss.as_f64() * batch.len() as f64;

            let blocks: Vec<ParamSet<T>> = (0..batch.len())
                .collect::<Vec<_>>()
                .par_chunks(GRAD_BLOCK)
                .map(|rows| {
                    let mut g = model.params.zeros_like();
                    for &r in rows {
                        model.backward(&inputs[r], &fwd[r], grad.row(r), &mut g);
                    }
                    g
                })
                .collect();
            let mut grads = model.params.zeros_like();
            for b in &blocks {
                for (acc, t) in grads.tensors_mut().iter_mut().zip(b.tensors()) {
                    acc.add_assign(t);
                }
            }
            opt.step(&mut model.params, &grads);
            if !model.params.all_finite() {
                return Err(Error::Divergence { epoch, msg: "non-finite parameters after update".into() });
            }
        }

        let train_ccc = target_ccc(&seen_pred, &seen_y, targets);
        let val_ccc = if val.is_empty() {
            [None, None]
        } else {
            let out = evaluate_raw(&model, &val_raw)?;
            let preds: Vec<Vec<f64>> = out.iter().map(|f| f.output.iter().map(|v| v.as_f64()).collect()).collect();
            target_ccc(&preds, &val_y, targets)
        };
        let score = mean_ccc(&val_ccc, targets);
        if !val.is_empty() && best.as_ref().map_or(true, |(s, _, _)| score > *s) {
            best = Some((score, epoch, model.params.clone()));
        }
        history.push(EpochRecord { epoch, learning_rate: lr, train_loss: loss_sum / train.len() as f64, train_ccc, val_ccc });
    }

    let best_epoch = best.map(|(_, e, p)| {
        model.params = p;
        e
    });
    Ok(TrainedEncoder { model, history, best_epoch })
}

/// Head outputs for one utterance, mapped to arousal/valence.
pub fn encoder_predict<T: Real>(encoder: &TrainedEncoder<T>, raw: &FeatureSequence) -> Result<Prediction> {
    let out = evaluate_raw(&encoder.model, std::slice::from_ref(raw))?.remove(0);
    let mut p = Prediction { arousal: None, valence: None };
    for (&t, v) in encoder.model.config.head.targets().iter().zip(&out.output) {
        let v = Some(v.as_f64());
        if t == 0 {
            p.arousal = v;
        } else {
            p.valence = v;
        }
    }
    Ok(p)
}

/// Fixed-length vector taken just before the prediction head.
pub fn extract_representation<T: Real>(encoder: &TrainedEncoder<T>, raw: &FeatureSequence) -> Result<Representation> {
    let out = evaluate_raw(&encoder.model, std::slice::from_ref(raw))?.remove(0);
    Ok(Representation {
        encoder: encoder.model.config.name.clone(),
        values: out.representation.iter().map(|v| v.as_f64()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_singleton_batch_is_merged() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![4, 5]);
        let b = batches(&order[..1], 4);
        assert_eq!(b.len(), 1);
        let b = batches(&order[..6], 4);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![4, 2]);
    }

    #[test]
    fn mean_ccc_requires_all_targets() {
        assert_eq!(mean_ccc(&[Some(0.5), None], &[0]), 0.5);
        assert_eq!(mean_ccc(&[Some(0.5), None], &[0, 1]), f64::NEG_INFINITY);
    }
}
