use serde::{Deserialize, Serialize};

use super::real::Real;
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

pub fn activation_forward<T: Real>(x: &Tensor<T>, kind: Activation) -> Tensor<T> {
    match kind {
        Activation::Identity => x.clone(),
        Activation::Relu => x.map(|v| if v > T::zero() { v } else { T::zero() }),
        Activation::Tanh => x.map(T::tanh),
    }
}

/// Gradient wrt the input, given the forward output `y`.
pub fn activation_backward<T: Real>(y: &Tensor<T>, grad: &Tensor<T>, kind: Activation) -> Tensor<T> {
    let mut out = grad.clone();
    match kind {
        Activation::Identity => {}
        Activation::Relu => {
            for (g, &v) in out.data_mut().iter_mut().zip(y.data()) {
                if v <= T::zero() {
                    *g = T::zero();
                }
            }
        }
        Activation::Tanh => {
            for (g, &v) in out.data_mut().iter_mut().zip(y.data()) {
                *g *= T::one() - v * v;
            }
        }
    }
    out
}

/// Softmax over the last dimension of every row.
pub fn softmax_lastdim<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let mut y = x.clone();
    for r in 0..y.rows() {
        softmax_in_place(y.row_mut(r));
    }
    y
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `dx = y ⊙ (g − Σ y⊙g)` per row.
pub fn softmax_backward<T: Real>(y: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros(y.shape());
    for r in 0..y.rows() {
        let (yr, gr) = (y.row(r), grad.row(r));
        let s: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        for ((o, &a), &b) in out.row_mut(r).iter_mut().zip(yr).zip(gr) {
            *o = a * (b - s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::gradcheck::{gradient_check, FnProblem};
    use crate::nncore::{xavier_uniform, ParamSet};
    use crate::rng::rng_from_seed;

    #[test]
    fn softmax_examples() {
        let y = softmax_lastdim(&Tensor::vector(vec![0.0f64, 0.0]));
        assert_eq!(y.data(), &[0.5, 0.5]);
        let y = softmax_lastdim(&Tensor::vector(vec![1.0f64, 2.0, 3.0]));
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        for (i, v) in y.data().iter().enumerate() {
            assert!((v - ((i + 1) as f64).exp() / z).abs() < 1e-15);
        }
        assert!((y.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relu_kills_negatives() {
        let y = activation_forward(&Tensor::vector(vec![-2.0f64, -0.5, 0.0, 1.5]), Activation::Relu);
        assert_eq!(y.data(), &[0.0, 0.0, 0.0, 1.5]);
    }

    #[test]
    fn gradients() {
        for seed in 0..20 {
            let mut rng = rng_from_seed(100 + seed);
            let x = xavier_uniform::<f64>(&[3, 4], 1, 1, &mut rng);
            let proj = xavier_uniform::<f64>(&[3, 4], 1, 1, &mut rng);
            for kind in [Activation::Relu, Activation::Tanh, Activation::Identity] {
                let p = proj.clone();
                let mut prob = FnProblem::new(ParamSet::new(), vec![("x".into(), x.clone())], move |ps, inp| {
                    let y = activation_forward(&inp[0], kind);
                    let v = crate::nncore::dot(y.data(), p.data());
                    (v, ps.zeros_like(), vec![activation_backward(&y, &p, kind)])
                });
                let r = gradient_check(&mut prob, 1e-5);
                assert!(r.passed, "{kind:?} seed {seed}: {r:?}");
            }
            let p = proj.clone();
            let mut prob = FnProblem::new(ParamSet::new(), vec![("x".into(), x.clone())], move |ps, inp| {
                let y = softmax_lastdim(&inp[0]);
                let v = crate::nncore::dot(y.data(), p.data());
                (v, ps.zeros_like(), vec![softmax_backward(&y, &p)])
            });
            let r = gradient_check(&mut prob, 1e-5);
            assert!(r.passed, "softmax seed {seed}: {r:?}");
        }
    }
}
