use super::params::{xavier_uniform, ParamId, ParamSet};
use super::real::Real;
use super::tensor::{matmul_acc, matmul_t_acc, t_matmul_acc, Tensor};
use crate::rng::Rng;
use crate::{Error, Result};

/// Fully connected layer `y = xW + b` over a batch of row vectors.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new<T: Real>(ps: &mut ParamSet<T>, name: &str, input: usize, output: usize, rng: &mut Rng) -> Self {
        let w = ps.add(format!("{name}.w"), xavier_uniform(&[input, output], input, output, rng));
        let b = ps.add(format!("{name}.b"), Tensor::zeros(&[output]));
        Dense { w, b, input, output }
    }

    pub fn forward<T: Real>(&self, ps: &ParamSet<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.cols() != self.input {
            return Err(Error::Shape(format!("dense expects {} inputs, got {}", self.input, x.cols())));
        }
        let n = x.rows();
        let b = ps.get(self.b).data();
        let mut y = Tensor::zeros(&[n, self.output]);
        for r in 0..n {
            y.row_mut(r).copy_from_slice(b);
        }
        matmul_acc(x.data(), ps.get(self.w).data(), y.data_mut(), n, self.input, self.output);
        Ok(y)
    }

    /// Accumulates dW, db into `grads` and returns dx.
    pub fn backward<T: Real>(&self, ps: &ParamSet<T>, x: &Tensor<T>, grad_out: &Tensor<T>, grads: &mut ParamSet<T>) -> Tensor<T> {
        let n = x.rows();
        t_matmul_acc(x.data(), grad_out.data(), grads.get_mut(self.w).data_mut(), n, self.input, self.output);
        let db = grads.get_mut(self.b).data_mut();
        for r in 0..n {
            for (d, &g) in db.iter_mut().zip(grad_out.row(r)) {
                *d += g;
            }
        }
        let mut dx = Tensor::zeros(&[n, self.input]);
        matmul_t_acc(grad_out.data(), ps.get(self.w).data(), dx.data_mut(), n, self.output, self.input);
        dx
    }
}
