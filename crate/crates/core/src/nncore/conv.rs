use super::params::{xavier_uniform, ParamId, ParamSet};
use super::real::Real;
use super::tensor::Tensor;
use crate::rng::Rng;
use crate::{Error, Result};

/// Valid (unpadded) temporal convolution. A filter spans `width` frames and
/// all input channels; the kernel is stored as a `(width·in) × out` matrix
/// so each output row is one window of the row-major input times the kernel.
#[derive(Debug, Clone, Copy)]
pub struct Conv1d {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub width: usize,
    pub stride: usize,
    pub input: usize,
    pub output: usize,
}

impl Conv1d {
    pub fn new<T: Real>(
        ps: &mut ParamSet<T>,
        name: &str,
        width: usize,
        stride: usize,
        input: usize,
        output: usize,
        rng: &mut Rng,
    ) -> Self {
        assert!(width >= 1 && stride >= 1);
        let fan_in = width * input;
        let kernel = ps.add(format!("{name}.kernel"), xavier_uniform(&[fan_in, output], fan_in, output, rng));
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[output]));
        Conv1d { kernel, bias, width, stride, input, output }
    }

    pub fn output_len(&self, frames: usize) -> usize {
        if frames < self.width {
            0
        } else {
            (frames - self.width) / self.stride + 1
        }
    }

    pub fn forward<T: Real>(&self, ps: &ParamSet<T>, seq: &Tensor<T>) -> Result<Tensor<T>> {
        if seq.cols() != self.input {
            return Err(Error::Shape(format!("conv expects {} channels, got {}", self.input, seq.cols())));
        }
        let frames = seq.rows();
        if frames < self.width {
            return Err(Error::Shape(format!("{frames} frames is shorter than filter width {}", self.width)));
        }
        let len = self.output_len(frames);
        let span = self.width * self.input;
        let k = ps.get(self.kernel).data();
        let b = ps.get(self.bias).data();
        let x = seq.data();
        let mut y = Tensor::zeros(&[len, self.output]);
        for t in 0..len {
            let window = &x[t * self.stride * self.input..t * self.stride * self.input + span];
            let out = y.row_mut(t);
            out.copy_from_slice(b);
            for (p, &xv) in window.iter().enumerate() {
                if xv == T::zero() {
                    continue;
                }
                for (o, &kv) in out.iter_mut().zip(&k[p * self.output..(p + 1) * self.output]) {
                    *o += xv * kv;
                }
            }
        }
        Ok(y)
    }

    pub fn backward<T: Real>(&self, ps: &ParamSet<T>, seq: &Tensor<T>, grad_out: &Tensor<T>, grads: &mut ParamSet<T>) -> Tensor<T> {
        let span = self.width * self.input;
        let x = seq.data();
        let mut dx = Tensor::zeros(seq.shape());
        {
            let dk = grads.get_mut(self.kernel).data_mut();
            for t in 0..grad_out.rows() {
                let g = grad_out.row(t);
                let base = t * self.stride * self.input;
                for p in 0..span {
                    let xv = x[base + p];
                    for (d, &gv) in dk[p * self.output..(p + 1) * self.output].iter_mut().zip(g) {
                        *d += xv * gv;
                    }
                }
            }
        }
        {
            let db = grads.get_mut(self.bias).data_mut();
            for t in 0..grad_out.rows() {
                for (d, &gv) in db.iter_mut().zip(grad_out.row(t)) {
                    *d += gv;
                }
            }
        }
        let k = ps.get(self.kernel).data();
        let dxd = dx.data_mut();
        for t in 0..grad_out.rows() {
            let g = grad_out.row(t);
            let base = t * self.stride * self.input;
            for p in 0..span {
                dxd[base + p] += super::tensor::dot(&k[p * self.output..(p + 1) * self.output], g);
            }
        }
        dx
    }
}

/// Parallel full-width convolutions of several widths over the same input.
#[derive(Debug, Clone)]
pub struct Conv1dMultiwidth {
    pub branches: Vec<Conv1d>,
}

impl Conv1dMultiwidth {
    pub fn new<T: Real>(ps: &mut ParamSet<T>, name: &str, widths: &[usize], input: usize, channels: usize, rng: &mut Rng) -> Self {
        assert!(widths.windows(2).all(|w| w[0] < w[1]), "widths must be strictly increasing");
        let branches = widths
            .iter()
            .map(|&w| Conv1d::new(ps, &format!("{name}.w{w}"), w, 1, input, channels, rng))
            .collect();
        Conv1dMultiwidth { branches }
    }

    pub fn widths(&self) -> Vec<usize> {
        self.branches.iter().map(|b| b.width).collect()
    }

    pub fn max_width(&self) -> usize {
        self.branches.iter().map(|b| b.width).max().unwrap_or(1)
    }

    pub fn forward<T: Real>(&self, ps: &ParamSet<T>, seq: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        self.branches.iter().map(|b| b.forward(ps, seq)).collect()
    }

    pub fn backward<T: Real>(&self, ps: &ParamSet<T>, seq: &Tensor<T>, grad_maps: &[Tensor<T>], grads: &mut ParamSet<T>) -> Tensor<T> {
        let mut dx = Tensor::zeros(seq.shape());
        for (b, g) in self.branches.iter().zip(grad_maps) {
            dx.add_assign(&b.backward(ps, seq, g, grads));
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::gradcheck::{gradient_check, FnProblem};
    use crate::rng::rng_from_seed;

    #[test]
    fn width_one_averaging_kernel_gives_frame_means() {
        let mut rng = rng_from_seed(0);
        let mut ps = ParamSet::<f64>::new();
        let c = Conv1d::new(&mut ps, "c", 1, 1, 4, 1, &mut rng);
        *ps.get_mut(c.kernel) = Tensor::matrix(4, 1, vec![0.25; 4]).unwrap();
        let x = Tensor::matrix(2, 4, vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 1.0, 8.0]).unwrap();
        assert_eq!(c.forward(&ps, &x).unwrap().data(), &[2.5, 2.0]);
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut rng = rng_from_seed(0);
        let mut ps = ParamSet::<f64>::new();
        let mw = Conv1dMultiwidth::new(&mut ps, "c", &[2, 3, 4, 5], 3, 2, &mut rng);
        for b in &mw.branches {
            *ps.get_mut(b.bias) = Tensor::vector(vec![0.5, -1.5]);
        }
        let maps = mw.forward(&ps, &Tensor::zeros(&[6, 3])).unwrap();
        assert_eq!(maps.len(), 4);
        for (m, w) in maps.iter().zip([2, 3, 4, 5]) {
            assert_eq!(m.rows(), 6 - w + 1);
            assert!(m.data().chunks(2).all(|r| r == [0.5, -1.5]));
        }
        assert!(mw.forward(&ps, &Tensor::zeros(&[4, 3])).is_err());
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = rng_from_seed(7);
        let mut ps = ParamSet::<f64>::new();
        let c = Conv1d::new(&mut ps, "c", 2, 1, 3, 2, &mut rng);
        *ps.get_mut(c.bias) = Tensor::vector(vec![0.1, -0.2]);
        let x = xavier_uniform::<f64>(&[7, 3], 1, 1, &mut rng);
        let y = c.forward(&ps, &x).unwrap();
        let k = ps.get(c.kernel);
        for t in 0..6 {
            for o in 0..2 {
                let mut s = ps.get(c.bias).data()[o];
                for dt in 0..2 {
                    for i in 0..3 {
                        s += x.at(t + dt, i) * k.at(dt * 3 + i, o);
                    }
                }
                assert!((y.at(t, o) - s).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gradients_multiwidth_and_strided() {
        for seed in 0..20 {
            let mut rng = rng_from_seed(200 + seed);
            let mut ps = ParamSet::<f64>::new();
            let mw = Conv1dMultiwidth::new(&mut ps, "mw", &[2, 3, 4, 5], 3, 2, &mut rng);
            let strided = Conv1d::new(&mut ps, "s", 3, 2, 3, 2, &mut rng);
            let x = xavier_uniform::<f64>(&[7, 3], 1, 1, &mut rng);
            let projs: Vec<Tensor<f64>> = [6, 5, 4, 3, 3]
                .iter()
                .map(|&r| xavier_uniform(&[r, 2], 1, 1, &mut rng))
                .collect();
            let mut prob = FnProblem::new(ps, vec![("x".into(), x)], move |ps, inp| {
                let maps = mw.forward(ps, &inp[0]).unwrap();
                let s = strided.forward(ps, &inp[0]).unwrap();
                let mut v = 0.0;
                for (m, p) in maps.iter().zip(&projs) {
                    v += crate::nncore::dot(m.data(), p.data());
                }
                v += crate::nncore::dot(s.data(), projs[4].data());
                let mut g = ps.zeros_like();
                let mut dx = mw.backward(ps, &inp[0], &projs[..4], &mut g);
                dx.add_assign(&strided.backward(ps, &inp[0], &projs[4], &mut g));
                (v, g, vec![dx])
            });
            let r = gradient_check(&mut prob, 1e-5);
            assert!(r.passed, "seed {seed}: {r:?}");
        }
    }
}
