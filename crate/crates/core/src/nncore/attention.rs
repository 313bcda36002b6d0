use super::params::{xavier_uniform, ParamId, ParamSet};
use super::real::Real;
use super::tensor::{dot, Tensor};
use crate::rng::Rng;
use crate::{Error, Result};

/// Additive attention pooling over frames:
/// `V = tanh(HW + b)`, `s = Vu`, `a = softmax(s)` over valid frames,
/// `context = Σ_t a_t h_t`. Masked frames get exactly zero weight.
#[derive(Debug, Clone, Copy)]
pub struct AttentionPool {
    pub w: ParamId,
    pub b: ParamId,
    pub u: ParamId,
    pub hidden: usize,
    pub att_dim: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<T> {
    valid: Vec<usize>,
    /// tanh activations of valid frames, one row each
    v: Vec<Vec<T>>,
    pub weights: Vec<T>,
}

impl AttentionPool {
    pub fn new<T: Real>(ps: &mut ParamSet<T>, name: &str, hidden: usize, att_dim: usize, rng: &mut Rng) -> Self {
        let w = ps.add(format!("{name}.w"), xavier_uniform(&[hidden, att_dim], hidden, att_dim, rng));
        let b = ps.add(format!("{name}.b"), Tensor::zeros(&[att_dim]));
        let u = ps.add(format!("{name}.u"), xavier_uniform(&[att_dim], att_dim, 1, rng));
        AttentionPool { w, b, u, hidden, att_dim }
    }

    /// Returns the context vector and the cache; `cache.weights` holds one
    /// weight per frame (zero where masked).
    pub fn forward<T: Real>(&self, ps: &ParamSet<T>, hs: &Tensor<T>, mask: &[bool]) -> Result<(Vec<T>, AttentionCache<T>)> {
        if hs.cols() != self.hidden || mask.len() != hs.rows() {
            return Err(Error::Shape("attention input".into()));
        }
        let valid: Vec<usize> = (0..hs.rows()).filter(|&t| mask[t]).collect();
        if valid.is_empty() {
            return Err(Error::Invalid("attention over a fully masked sequence".into()));
        }
        let w = ps.get(self.w).data();
        let b = ps.get(self.b).data();
        let u = ps.get(self.u).data();
        let mut v = Vec::with_capacity(valid.len());
        let mut scores = Vec::with_capacity(valid.len());
        for &t in &valid {
            let mut row = b.to_vec();
            super::tensor::matmul_acc(hs.row(t), w, &mut row, 1, self.hidden, self.att_dim);
            row.iter_mut().for_each(|x| *x = x.tanh());
            scores.push(dot(&row, u));
            v.push(row);
        }
        super::activation::softmax_in_place(&mut scores);
        let mut weights = vec![T::zero(); hs.rows()];
        let mut context = vec![T::zero(); self.hidden];
        for (&t, &a) in valid.iter().zip(&scores) {
            weights[t] = a;
            for (c, &hv) in context.iter_mut().zip(hs.row(t)) {
                *c += a * hv;
            }
        }
        Ok((context, AttentionCache { valid, v, weights }))
    }

    pub fn backward<T: Real>(
        &self,
        ps: &ParamSet<T>,
        hs: &Tensor<T>,
        cache: &AttentionCache<T>,
        grad_context: &[T],
        grads: &mut ParamSet<T>,
    ) -> Tensor<T> {
        let mut dh = Tensor::zeros(hs.shape());
        // d a_t = h_t · dcontext ; dh_t += a_t dcontext
        let da: Vec<T> = cache.valid.iter().map(|&t| dot(hs.row(t), grad_context)).collect();
        let a: Vec<T> = cache.valid.iter().map(|&t| cache.weights[t]).collect();
        let s: T = a.iter().zip(&da).map(|(&x, &y)| x * y).sum();
        let u = ps.get(self.u).data().to_vec();
        let w = ps.get(self.w).data().to_vec();
        let mut du = vec![T::zero(); self.att_dim];
        let mut dpre_rows = Vec::with_capacity(cache.valid.len());
        for (k, &t) in cache.valid.iter().enumerate() {
            for (d, &g) in dh.row_mut(t).iter_mut().zip(grad_context) {
                *d += a[k] * g;
            }
            let ds = a[k] * (da[k] - s);
            let vrow = &cache.v[k];
            for (d, &vv) in du.iter_mut().zip(vrow) {
                *d += ds * vv;
            }
            let dpre: Vec<T> = vrow.iter().zip(&u).map(|(&vv, &uu)| ds * uu * (T::one() - vv * vv)).collect();
            dpre_rows.push(dpre);
        }
        {
            let dw = grads.get_mut(self.w).data_mut();
            for (k, &t) in cache.valid.iter().enumerate() {
                for (i, &hv) in hs.row(t).iter().enumerate() {
                    for (d, &p) in dw[i * self.att_dim..(i + 1) * self.att_dim].iter_mut().zip(&dpre_rows[k]) {
                        *d += hv * p;
                    }
                }
            }
        }
        {
            let db = grads.get_mut(self.b).data_mut();
            for row in &dpre_rows {
                for (d, &p) in db.iter_mut().zip(row) {
                    *d += p;
                }
            }
        }
        for (d, &v) in grads.get_mut(self.u).data_mut().iter_mut().zip(&du) {
            *d += v;
        }
        for (k, &t) in cache.valid.iter().enumerate() {
            for (i, d) in dh.row_mut(t).iter_mut().enumerate() {
                *d += dot(&w[i * self.att_dim..(i + 1) * self.att_dim], &dpre_rows[k]);
            }
        }
        dh
    }
}
