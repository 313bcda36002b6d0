use super::params::{xavier_uniform, ParamId, ParamSet};
use super::real::{sigmoid, Real};
use super::tensor::{matmul_acc, Tensor};
use crate::rng::Rng;
use crate::{Error, Result};

/// Single-layer LSTM with zero initial state.
///
/// The four gates are packed column-wise in the order input, forget,
/// output, candidate: `w` is `in × 4h`, `u` is `h × 4h`, `b` is `4h`.
/// Timesteps whose mask bit is false copy the previous hidden and cell
/// state unchanged.
#[derive(Debug, Clone, Copy)]
pub struct Lstm {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// Per-step activations kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    /// Activated gates `[i | f | o | g]` per step.
    gates: Vec<Vec<T>>,
    cells: Vec<Vec<T>>,
    tanh_cells: Vec<Vec<T>>,
    mask: Vec<bool>,
}

impl Lstm {
    pub fn new<T: Real>(ps: &mut ParamSet<T>, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let h4 = 4 * hidden;
        let w = ps.add(format!("{name}.w"), xavier_uniform(&[input, h4], input, hidden, rng));
        let u = ps.add(format!("{name}.u"), xavier_uniform(&[hidden, h4], hidden, hidden, rng));
        let mut bias = Tensor::zeros(&[h4]);
        for j in hidden..2 * hidden {
            bias.data_mut()[j] = T::one();
        }
        let b = ps.add(format!("{name}.b"), bias);
        Lstm { w, u, b, input, hidden }
    }

    /// Returns the stacked hidden states `H` (frames × hidden).
    pub fn forward<T: Real>(&self, ps: &ParamSet<T>, seq: &Tensor<T>, mask: &[bool]) -> Result<(Tensor<T>, LstmCache<T>)> {
        if seq.cols() != self.input {
            return Err(Error::Shape(format!("lstm expects {} inputs, got {}", self.input, seq.cols())));
        }
        if mask.len() != seq.rows() {
            return Err(Error::Shape("lstm mask length".into()));
        }
        let (frames, h) = (seq.rows(), self.hidden);
        let h4 = 4 * h;
        // input contributions for all steps at once
        let mut zx = Tensor::zeros(&[frames, h4]);
        matmul_acc(seq.data(), ps.get(self.w).data(), zx.data_mut(), frames, self.input, h4);
        let u = ps.get(self.u).data();
        let b = ps.get(self.b).data();

        let mut hs = Tensor::zeros(&[frames, h]);
        let mut h_prev = vec![T::zero(); h];
        let mut c_prev = vec![T::zero(); h];
        let mut cache = LstmCache { gates: Vec::with_capacity(frames), cells: Vec::new(), tanh_cells: Vec::new(), mask: mask.to_vec() };
        for t in 0..frames {
            if !mask[t] {
                hs.row_mut(t).copy_from_slice(&h_prev);
                cache.gates.push(Vec::new());
                cache.cells.push(c_prev.clone());
                cache.tanh_cells.push(Vec::new());
                continue;
            }
            let mut z: Vec<T> = zx.row(t).iter().zip(b).map(|(&a, &bb)| a + bb).collect();
            matmul_acc(&h_prev, u, &mut z, 1, h, h4);
            for j in 0..3 * h {
                z[j] = sigmoid(z[j]);
            }
            for v in &mut z[3 * h..] {
                *v = v.tanh();
            }
            let mut c = vec![T::zero(); h];
            let mut tc = vec![T::zero(); h];
            let hr = hs.row_mut(t);
            for j in 0..h {
                c[j] = z[h + j] * c_prev[j] + z[j] * z[3 * h + j];
                tc[j] = c[j].tanh();
                hr[j] = z[2 * h + j] * tc[j];
            }
            h_prev.copy_from_slice(hr);
            cache.gates.push(z);
            cache.cells.push(c.clone());
            cache.tanh_cells.push(tc);
            c_prev = c;
        }
        Ok((hs, cache))
    }

    /// Backpropagation through time. `grad_h` is dL/dH (frames × hidden).
    pub fn backward<T: Real>(
        &self,
        ps: &ParamSet<T>,
        seq: &Tensor<T>,
        hs: &Tensor<T>,
        cache: &LstmCache<T>,
        grad_h: &Tensor<T>,
        grads: &mut ParamSet<T>,
    ) -> Tensor<T> {
        let (frames, h) = (seq.rows(), self.hidden);
        let h4 = 4 * h;
        let u = ps.get(self.u).data().to_vec();
        let w = ps.get(self.w).data().to_vec();
        let mut dz_all = Tensor::zeros(&[frames, h4]);
        let mut dh_next = vec![T::zero(); h];
        let mut dc_next = vec![T::zero(); h];
        let zero = vec![T::zero(); h];

        for t in (0..frames).rev() {
            let mut dh: Vec<T> = grad_h.row(t).iter().zip(&dh_next).map(|(&a, &b)| a + b).collect();
            if !cache.mask[t] {
                dh_next = dh;
                continue;
            }
            let z = &cache.gates[t];
            let tc = &cache.tanh_cells[t];
            let c_prev = if t == 0 { &zero } else { &cache.cells[t - 1] };
            let dz = dz_all.row_mut(t);
            for j in 0..h {
                let (i, f, o, g) = (z[j], z[h + j], z[2 * h + j], z[3 * h + j]);
                let dc = dc_next[j] + dh[j] * o * (T::one() - tc[j] * tc[j]);
                dz[j] = dc * g * i * (T::one() - i);
                dz[h + j] = dc * c_prev[j] * f * (T::one() - f);
                dz[2 * h + j] = dh[j] * tc[j] * o * (T::one() - o);
                dz[3 * h + j] = dc * i * (T::one() - g * g);
                dc_next[j] = dc * f;
            }
            // dh_prev = dz · Uᵀ
            for (j, d) in dh.iter_mut().enumerate() {
                *d = super::tensor::dot(dz, &u[j * h4..(j + 1) * h4]);
            }
            dh_next = dh;
        }

        // dW = Xᵀ dZ, dU = H_prevᵀ dZ, db = Σ dZ; masked rows of dZ are zero
        let mut h_prev = Tensor::zeros(&[frames, h]);
        for t in 1..frames {
            h_prev.row_mut(t).copy_from_slice(hs.row(t - 1));
        }
        super::tensor::t_matmul_acc(seq.data(), dz_all.data(), grads.get_mut(self.w).data_mut(), frames, self.input, h4);
        super::tensor::t_matmul_acc(h_prev.data(), dz_all.data(), grads.get_mut(self.u).data_mut(), frames, h, h4);
        let db = grads.get_mut(self.b).data_mut();
        for t in 0..frames {
            for (d, &v) in db.iter_mut().zip(dz_all.row(t)) {
                *d += v;
            }
        }
        let mut dx = Tensor::zeros(&[frames, self.input]);
        super::tensor::matmul_t_acc(dz_all.data(), &w, dx.data_mut(), frames, h4, self.input);
        dx
    }
}
