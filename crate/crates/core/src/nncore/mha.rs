use super::params::{xavier_uniform, ParamId, ParamSet};
use super::real::Real;
use super::tensor::{dot, matmul_acc, matmul_t_acc, t_matmul_acc, Tensor};
use crate::rng::Rng;
use crate::{Error, Result};

/// Multi-head scaled dot-product self-attention without positional
/// encoding, residuals or normalization.
///
/// The per-head projections are packed side by side: head `h` of `wq`
/// occupies columns `h·head_dim .. (h+1)·head_dim`. Masked tokens are never
/// used as keys or values.
#[derive(Debug, Clone, Copy)]
pub struct Mha {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub model_dim: usize,
    pub heads: usize,
    pub head_dim: usize,
}

#[derive(Debug, Clone)]
pub struct MhaCache<T> {
    q: Tensor<T>,
    k: Tensor<T>,
    v: Tensor<T>,
    /// Concatenated head outputs, tokens × (heads·head_dim).
    o: Tensor<T>,
    valid: Vec<usize>,
    /// Attention weights per head, tokens × valid-keys.
    pub attn: Vec<Tensor<T>>,
}

impl Mha {
    pub fn new<T: Real>(ps: &mut ParamSet<T>, name: &str, model_dim: usize, heads: usize, head_dim: usize, rng: &mut Rng) -> Self {
        let inner = heads * head_dim;
        let wq = ps.add(format!("{name}.wq"), xavier_uniform(&[model_dim, inner], model_dim, head_dim, rng));
        let wk = ps.add(format!("{name}.wk"), xavier_uniform(&[model_dim, inner], model_dim, head_dim, rng));
        let wv = ps.add(format!("{name}.wv"), xavier_uniform(&[model_dim, inner], model_dim, head_dim, rng));
        let wo = ps.add(format!("{name}.wo"), xavier_uniform(&[inner, model_dim], inner, model_dim, rng));
        Mha { wq, wk, wv, wo, model_dim, heads, head_dim }
    }

    fn inner(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn forward<T: Real>(&self, ps: &ParamSet<T>, x: &Tensor<T>, mask: &[bool]) -> Result<(Tensor<T>, MhaCache<T>)> {
        if x.cols() != self.model_dim || mask.len() != x.rows() {
            return Err(Error::Shape("mha input".into()));
        }
        let valid: Vec<usize> = (0..x.rows()).filter(|&t| mask[t]).collect();
        if valid.is_empty() {
            return Err(Error::Invalid("self-attention over a fully masked sequence".into()));
        }
        let (n, inner, hd) = (x.rows(), self.inner(), self.head_dim);
        let project = |id: ParamId| {
            let mut out = Tensor::zeros(&[n, inner]);
            matmul_acc(x.data(), ps.get(id).data(), out.data_mut(), n, self.model_dim, inner);
            out
        };
        let (q, k, v) = (project(self.wq), project(self.wk), project(self.wv));
        let scale = T::one() / T::lit(hd as f64).sqrt();
        let mut o = Tensor::zeros(&[n, inner]);
        let mut attn = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = h * hd..(h + 1) * hd;
            let mut a = Tensor::zeros(&[n, valid.len()]);
            for i in 0..n {
                let qi = &q.row(i)[cols.clone()];
                let row = a.row_mut(i);
                for (s, &j) in row.iter_mut().zip(&valid) {
                    *s = dot(qi, &k.row(j)[cols.clone()]) * scale;
                }
                super::activation::softmax_in_place(row);
                let oi = &mut o.row_mut(i)[cols.clone()];
                for (&w, &j) in a.row(i).iter().zip(&valid) {
                    for (ov, &vv) in oi.iter_mut().zip(&v.row(j)[cols.clone()]) {
                        *ov += w * vv;
                    }
                }
            }
            attn.push(a);
        }
        let mut y = Tensor::zeros(&[n, self.model_dim]);
        matmul_acc(o.data(), ps.get(self.wo).data(), y.data_mut(), n, inner, self.model_dim);
        Ok((y, MhaCache { q, k, v, o, valid, attn }))
    }

    pub fn backward<T: Real>(&self, ps: &ParamSet<T>, x: &Tensor<T>, cache: &MhaCache<T>, grad_y: &Tensor<T>, grads: &mut ParamSet<T>) -> Tensor<T> {
        let (n, inner, hd) = (x.rows(), self.inner(), self.head_dim);
        let scale = T::one() / T::lit(hd as f64).sqrt();
        t_matmul_acc(cache.o.data(), grad_y.data(), grads.get_mut(self.wo).data_mut(), n, inner, self.model_dim);
        let mut d_o = Tensor::zeros(&[n, inner]);
        matmul_t_acc(grad_y.data(), ps.get(self.wo).data(), d_o.data_mut(), n, self.model_dim, inner);

        let mut dq = Tensor::zeros(&[n, inner]);
        let mut dk = Tensor::zeros(&[n, inner]);
        let mut dv = Tensor::zeros(&[n, inner]);
        let nv = cache.valid.len();
        for h in 0..self.heads {
            let cols = h * hd..(h + 1) * hd;
            let a = &cache.attn[h];
            for i in 0..n {
                let doi = &d_o.row(i)[cols.clone()];
                // dA_ij = dO_i · V_j
                let da: Vec<T> = cache.valid.iter().map(|&j| dot(doi, &cache.v.row(j)[cols.clone()])).collect();
                let arow = a.row(i);
                let s: T = arow.iter().zip(&da).map(|(&x, &y)| x * y).sum();
                for c in 0..nv {
                    let j = cache.valid[c];
                    let w = arow[c];
                    // dV_j += A_ij dO_i
                    for (d, &g) in dv.row_mut(j)[cols.clone()].iter_mut().zip(doi) {
                        *d += w * g;
                    }
                    let ds = w * (da[c] - s) * scale;
                    for (d, &kv) in dq.row_mut(i)[cols.clone()].iter_mut().zip(&cache.k.row(j)[cols.clone()]) {
                        *d += ds * kv;
                    }
                    for (d, &qv) in dk.row_mut(j)[cols.clone()].iter_mut().zip(&cache.q.row(i)[cols.clone()]) {
                        *d += ds * qv;
                    }
                }
            }
        }
        let mut dx = Tensor::zeros(&[n, self.model_dim]);
        for (id, d) in [(self.wq, &dq), (self.wk, &dk), (self.wv, &dv)] {
            t_matmul_acc(x.data(), d.data(), grads.get_mut(id).data_mut(), n, self.model_dim, inner);
            matmul_t_acc(d.data(), ps.get(id).data(), dx.data_mut(), n, inner, self.model_dim);
        }
        dx
    }
}
