use crate::nncore::{
    activation_backward, activation_forward, global_pool, global_pool_backward, Activation, AttentionCache,
    AttentionPool, Conv1d, Conv1dMultiwidth, Dense, Lstm, LstmCache, Mha, MhaCache, ParamSet, PoolCache, PoolKind,
    Real, Tensor,
};
use crate::rng::Rng;
use crate::{Error, Result};

use super::config::{ArchConfig, EncoderConfig};

/// One prepared example: rows are frames/tokens/samples, `mask[t]` marks the
/// rows that hold data. Masked rows never influence the output.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput<T> {
    pub x: Tensor<T>,
    pub mask: Vec<bool>,
}

impl<T: Real> ModelInput<T> {
    pub fn unmasked(x: Tensor<T>) -> Self {
        let mask = vec![true; x.rows()];
        ModelInput { x, mask }
    }

    fn valid(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&t| self.mask[t]).collect()
    }
}

#[derive(Debug, Clone)]
enum Net {
    VisCnn1d { conv: Conv1dMultiwidth, fc: Dense },
    VisLstmAttn { lstm: Lstm, att: AttentionPool, fc: Dense },
    TextMha { mha: Mha, fc: Dense },
    AudConv1d { convs: Vec<Conv1d> },
    AudMlp { layers: Vec<Dense> },
}

#[derive(Debug, Clone)]
enum Cache<T> {
    VisCnn1d { valid: Vec<usize>, seq: Tensor<T>, pools: Vec<PoolCache>, map_rows: Vec<usize>, rep: Tensor<T>, hid: Tensor<T> },
    VisLstmAttn { hs: Tensor<T>, lstm: LstmCache<T>, att: AttentionCache<T>, ctx: Tensor<T>, hid: Tensor<T> },
    TextMha { valid: Vec<usize>, seq: Tensor<T>, y_rows: usize, mha: MhaCache<T>, pool: PoolCache, pooled: Tensor<T>, rep: Tensor<T> },
    AudConv1d { valid: Vec<usize>, acts: Vec<Tensor<T>>, pool: PoolCache, rep: Tensor<T> },
    AudMlp { x: Tensor<T>, acts: Vec<Tensor<T>> },
}

/// Result of a forward pass; keeps what the backward pass needs.
#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    pub representation: Vec<T>,
    pub output: Vec<T>,
    cache: Cache<T>,
}

/// Encoder network plus its parameters. The head is always created last, so
/// for a given seed every non-head parameter is identical across head types.
#[derive(Debug, Clone)]
pub struct EncoderModel<T> {
    pub config: EncoderConfig,
    pub params: ParamSet<T>,
    /// Input columns kept by feature selection (`aud_mlp` only).
    pub feature_index: Option<Vec<usize>>,
    net: Net,
    head: Dense,
    rep_dim: usize,
}

pub fn build_encoder<T: Real>(config: &EncoderConfig, rng: &mut Rng) -> Result<EncoderModel<T>> {
    config.validate()?;
    let mut ps = ParamSet::new();
    let d = config.input_dim;
    let mut feature_index = None;
    let (net, (head_in, rep_dim)) = match &config.arch {
        ArchConfig::VisCnn1d { widths, channels, fc_dim } => {
            let conv = Conv1dMultiwidth::new(&mut ps, "conv", widths, d, *channels, rng);
            let fc = Dense::new(&mut ps, "fc", widths.len() * channels, *fc_dim, rng);
            (Net::VisCnn1d { conv, fc }, (*fc_dim, widths.len() * channels))
        }
        ArchConfig::VisLstmAttn { hidden, att_dim, fc_dim } => {
            let lstm = Lstm::new(&mut ps, "lstm", d, *hidden, rng);
            let att = AttentionPool::new(&mut ps, "att", *hidden, att_dim.unwrap_or(*hidden), rng);
            let fc = Dense::new(&mut ps, "fc", *hidden, *fc_dim, rng);
            (Net::VisLstmAttn { lstm, att, fc }, (*fc_dim, *hidden))
        }
        ArchConfig::TextMha { heads, head_dim, fc_dim } => {
            let mha = Mha::new(&mut ps, "mha", d, *heads, *head_dim, rng);
            let fc = Dense::new(&mut ps, "fc", d, *fc_dim, rng);
            (Net::TextMha { mha, fc }, (*fc_dim, *fc_dim))
        }
        ArchConfig::AudConv1d { channels, kernel, stride } => {
            let mut convs = Vec::with_capacity(channels.len());
            let mut input = 1;
            for (i, &c) in channels.iter().enumerate() {
                convs.push(Conv1d::new(&mut ps, &format!("conv{}", i + 1), *kernel, *stride, input, c, rng));
                input = c;
            }
            (Net::AudConv1d { convs }, (input, input))
        }
        ArchConfig::AudMlp { hidden, select_k } => {
            let k = select_k.unwrap_or(d);
            if select_k.is_some() {
                feature_index = Some((0..k).collect());
            }
            let mut layers = Vec::with_capacity(hidden.len());
            let mut input = k;
            for (i, &h) in hidden.iter().enumerate() {
                layers.push(Dense::new(&mut ps, &format!("fc{}", i + 1), input, h, rng));
                input = h;
            }
            (Net::AudMlp { layers }, (input, input))
        }
    };
    let head = Dense::new(&mut ps, "head", head_in, config.head.outputs(), rng);
    Ok(EncoderModel { config: config.clone(), params: ps, feature_index, net, head, rep_dim })
}

fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    activation_forward(x, Activation::Relu)
}

fn relu_back<T: Real>(y: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    activation_backward(y, g, Activation::Relu)
}

fn row<T: Real>(v: Vec<T>) -> Tensor<T> {
    let n = v.len();
    Tensor::from_vec(&[1, n], v).expect("row shape")
}

fn pad_rows<T: Real>(x: Tensor<T>, rows: usize) -> Tensor<T> {
    if x.rows() >= rows {
        return x;
    }
    let cols = x.cols();
    let mut data = x.into_data();
    data.resize(rows * cols, T::zero());
    Tensor::from_vec(&[rows, cols], data).expect("padded shape")
}

fn scatter_rows<T: Real>(src: &Tensor<T>, idx: &[usize], rows: usize) -> Tensor<T> {
    let mut out = Tensor::zeros(&[rows, src.cols()]);
    for (k, &t) in idx.iter().enumerate() {
        out.row_mut(t).copy_from_slice(src.row(k));
    }
    out
}

/// Shortest waveform for which every layer of the stack has one output.
fn min_wave_len(convs: &[Conv1d]) -> usize {
    convs.iter().rev().fold(1, |need, c| (need - 1) * c.stride + c.width)
}

impl<T: Real> EncoderModel<T> {
    pub fn representation_dim(&self) -> usize {
        self.rep_dim
    }

    pub fn outputs(&self) -> usize {
        self.head.output
    }

    /// Rebuilds the network structure for `config` around existing parameters.
    pub fn with_params(config: &EncoderConfig, params: ParamSet<T>, feature_index: Option<Vec<usize>>) -> Result<Self> {
        let mut rng = crate::rng::rng_from_seed(0);
        let mut model = build_encoder::<T>(config, &mut rng)?;
        if model.params.names() != params.names() {
            return Err(Error::Invalid(format!("parameter names do not match architecture `{}`", config.arch.name())));
        }
        for (a, b) in model.params.tensors().iter().zip(params.tensors()) {
            if a.shape() != b.shape() {
                return Err(Error::Shape(format!("checkpoint tensor {:?} vs expected {:?}", b.shape(), a.shape())));
            }
        }
        if let (Some(cur), Some(new)) = (&model.feature_index, &feature_index) {
            if cur.len() != new.len() || new.iter().any(|&c| c >= config.input_dim) {
                return Err(Error::Invalid("feature index does not fit the input".into()));
            }
        }
        model.params = params;
        if feature_index.is_some() {
            model.feature_index = feature_index;
        }
        Ok(model)
    }

    pub fn forward(&self, input: &ModelInput<T>) -> Result<ForwardOutput<T>> {
        self.forward_with(&self.params, input)
    }

    /// Forward pass with an explicit parameter set of the same layout.
    pub fn forward_with(&self, ps: &ParamSet<T>, input: &ModelInput<T>) -> Result<ForwardOutput<T>> {
        let x = &input.x;
        if x.cols() != self.config.input_dim {
            return Err(Error::Shape(format!(
                "encoder `{}` expects {}-D rows, got {}",
                self.config.name,
                self.config.input_dim,
                x.cols()
            )));
        }
        if input.mask.len() != x.rows() {
            return Err(Error::Shape(format!("mask of {} for {} rows", input.mask.len(), x.rows())));
        }
        let valid = input.valid();
        if valid.is_empty() {
            return Err(Error::Invalid("input has no unmasked rows".into()));
        }
        let (representation, head_in, cache) = match &self.net {
            Net::VisCnn1d { conv, fc } => {
                let n = valid.len();
                let seq = pad_rows(x.gather_rows(&valid), conv.max_width());
                let maps = conv.forward(ps, &seq)?;
                let mut pooled = Vec::new();
                let mut pools = Vec::new();
                let mut map_rows = Vec::new();
                for (branch, map) in conv.branches.iter().zip(&maps) {
                    let last = n.max(branch.width) - branch.width;
                    let mask: Vec<bool> = (0..map.rows()).map(|t| t <= last).collect();
                    let (p, c) = global_pool(map, PoolKind::Max, &mask)?;
                    pooled.extend(p);
                    pools.push(c);
                    map_rows.push(map.rows());
                }
                let rep = relu(&row(pooled));
                let hid = relu(&fc.forward(ps, &rep)?);
                (rep.data().to_vec(), hid.clone(), Cache::VisCnn1d { valid, seq, pools, map_rows, rep, hid })
            }
            Net::VisLstmAttn { lstm, att, fc } => {
                let (hs, lc) = lstm.forward(ps, x, &input.mask)?;
                let (ctx, ac) = att.forward(ps, &hs, &input.mask)?;
                let ctx = row(ctx);
                let hid = relu(&fc.forward(ps, &ctx)?);
                (ctx.data().to_vec(), hid.clone(), Cache::VisLstmAttn { hs, lstm: lc, att: ac, ctx, hid })
            }
            Net::TextMha { mha, fc } => {
                let seq = x.gather_rows(&valid);
                let all = vec![true; seq.rows()];
                let (y, mc) = mha.forward(ps, &seq, &all)?;
                let (p, pc) = global_pool(&y, PoolKind::Avg, &all)?;
                let pooled = row(p);
                let rep = relu(&fc.forward(ps, &pooled)?);
                let y_rows = y.rows();
                (rep.data().to_vec(), rep.clone(), Cache::TextMha { valid, seq, y_rows, mha: mc, pool: pc, pooled, rep })
            }
            Net::AudConv1d { convs } => {
                let seq = pad_rows(x.gather_rows(&valid), min_wave_len(convs));
                let mut acts = vec![seq];
                for c in convs {
                    let out = relu(&c.forward(ps, acts.last().unwrap())?);
                    acts.push(out);
                }
                let last = acts.last().unwrap();
                let (p, pc) = global_pool(last, PoolKind::Max, &vec![true; last.rows()])?;
                let rep = row(p);
                (rep.data().to_vec(), rep.clone(), Cache::AudConv1d { valid, acts, pool: pc, rep })
            }
            Net::AudMlp { layers } => {
                let first = x.row(valid[0]);
                let sel: Vec<T> = match &self.feature_index {
                    Some(idx) => idx.iter().map(|&c| first[c]).collect(),
                    None => first.to_vec(),
                };
                let xin = row(sel);
                let mut acts: Vec<Tensor<T>> = Vec::with_capacity(layers.len());
                for l in layers {
                    let h = relu(&l.forward(ps, acts.last().unwrap_or(&xin))?);
                    acts.push(h);
                }
                let rep = acts.last().unwrap().clone();
                (rep.data().to_vec(), rep, Cache::AudMlp { x: xin, acts })
            }
        };
        let output = self.head.forward(ps, &head_in)?.into_data();
        Ok(ForwardOutput { representation, output, cache })
    }

    /// Accumulates parameter gradients of `grad_out · output` into `grads`
    /// and returns the gradient with respect to `input.x`.
    pub fn backward(&self, input: &ModelInput<T>, fwd: &ForwardOutput<T>, grad_out: &[T], grads: &mut ParamSet<T>) -> Tensor<T> {
        self.backward_with(&self.params, input, fwd, grad_out, grads)
    }

    pub fn backward_with(
        &self,
        ps: &ParamSet<T>,
        input: &ModelInput<T>,
        fwd: &ForwardOutput<T>,
        grad_out: &[T],
        grads: &mut ParamSet<T>,
    ) -> Tensor<T> {
        let g = row(grad_out.to_vec());
        let rows = input.x.rows();
        match (&self.net, &fwd.cache) {
            (Net::VisCnn1d { conv, fc }, Cache::VisCnn1d { valid, seq, pools, map_rows, rep, hid }) => {
                let dhid = self.head.backward(ps, hid, &g, grads);
                let drep = fc.backward(ps, rep, &relu_back(hid, &dhid), grads);
                let drep = relu_back(rep, &drep);
                let ch = conv.branches[0].output;
                let gmaps: Vec<Tensor<T>> = pools
                    .iter()
                    .zip(map_rows)
                    .enumerate()
                    .map(|(i, (pc, &r))| global_pool_backward(pc, &drep.data()[i * ch..(i + 1) * ch], r))
                    .collect();
                let dseq = conv.backward(ps, seq, &gmaps, grads);
                scatter_rows(&dseq, valid, rows)
            }
            (Net::VisLstmAttn { lstm, att, fc }, Cache::VisLstmAttn { hs, lstm: lc, att: ac, ctx, hid }) => {
                let dhid = self.head.backward(ps, hid, &g, grads);
                let dctx = fc.backward(ps, ctx, &relu_back(hid, &dhid), grads);
                let dhs = att.backward(ps, hs, ac, dctx.data(), grads);
                lstm.backward(ps, &input.x, hs, lc, &dhs, grads)
            }
            (Net::TextMha { mha, fc }, Cache::TextMha { valid, seq, y_rows, mha: mc, pool, pooled, rep }) => {
                let drep = self.head.backward(ps, rep, &g, grads);
                let dpooled = fc.backward(ps, pooled, &relu_back(rep, &drep), grads);
                let dy = global_pool_backward(pool, dpooled.data(), *y_rows);
                let dseq = mha.backward(ps, seq, mc, &dy, grads);
                scatter_rows(&dseq, valid, rows)
            }
            (Net::AudConv1d { convs }, Cache::AudConv1d { valid, acts, pool, rep }) => {
                let drep = self.head.backward(ps, rep, &g, grads);
                let mut d = global_pool_backward(pool, drep.data(), acts.last().unwrap().rows());
                for (i, c) in convs.iter().enumerate().rev() {
                    let dz = relu_back(&acts[i + 1], &d);
                    d = c.backward(ps, &acts[i], &dz, grads);
                }
                scatter_rows(&d.slice_rows(0, valid.len()), valid, rows)
            }
            (Net::AudMlp { layers }, Cache::AudMlp { x, acts }) => {
                let mut d = self.head.backward(ps, acts.last().unwrap(), &g, grads);
                for (i, l) in layers.iter().enumerate().rev() {
                    let dz = relu_back(&acts[i], &d);
                    d = l.backward(ps, if i == 0 { x } else { &acts[i - 1] }, &dz, grads);
                }
                let mut dx = Tensor::zeros(&[rows, input.x.cols()]);
                let first = input.mask.iter().position(|&m| m).expect("forward checked mask");
                let target = dx.row_mut(first);
                match &self.feature_index {
                    Some(idx) => idx.iter().zip(d.data()).for_each(|(&c, &v)| target[c] += v),
                    None => target.copy_from_slice(d.data()),
                }
                dx
            }
            _ => unreachable!("forward cache from a different architecture"),
        }
    }
}
