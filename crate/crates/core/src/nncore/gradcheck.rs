//! Central finite-difference gradient checking at double precision.
//!
//! Each scalar of every block (parameters and inputs) is perturbed by ±h
//! with h = 1e-5. The relative error of an entry is
//! `|analytic − numeric| / max(|analytic|, |numeric|, 1e-3)`; the floor keeps
//! near-zero gradients from turning rounding noise into huge ratios.

use serde::Serialize;

use super::params::ParamSet;
use super::tensor::Tensor;

pub const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-3;

/// Something with named blocks of variables, a scalar objective and an
/// analytic gradient for every block.
pub trait GradProblem {
    fn block_names(&self) -> Vec<String>;
    fn block_mut(&mut self, i: usize) -> &mut [f64];
    /// Objective value and analytic gradients, one vector per block.
    fn evaluate(&self) -> (f64, Vec<Vec<f64>>);
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Block holding the largest error.
    pub worst_block: Option<String>,
    /// Blocks with at least one entry over tolerance.
    pub failing: Vec<String>,
    pub tolerance: f64,
    pub checked: usize,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

pub fn gradient_check(problem: &mut dyn GradProblem, tolerance: f64) -> GradCheckReport {
    let names = problem.block_names();
    let (_, analytic) = problem.evaluate();
    let mut max_rel_err = 0.0f64;
    let mut worst_block = None;
    let mut failing = Vec::new();
    let mut checked = 0;
    for (b, name) in names.iter().enumerate() {
        let len = problem.block_mut(b).len();
        let mut block_failed = false;
        for i in 0..len {
            let orig = problem.block_mut(b)[i];
            problem.block_mut(b)[i] = orig + STEP;
            let (plus, _) = problem.evaluate();
            problem.block_mut(b)[i] = orig - STEP;
            let (minus, _) = problem.evaluate();
            problem.block_mut(b)[i] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            let err = relative_error(analytic[b][i], numeric);
            checked += 1;
            if err > max_rel_err || err.is_nan() {
                max_rel_err = if err.is_nan() { f64::INFINITY } else { err };
                worst_block = Some(name.clone());
            }
            if !(err <= tolerance) {
                block_failed = true;
            }
        }
        if block_failed {
            failing.push(name.clone());
        }
    }
    GradCheckReport { max_rel_err, worst_block, passed: failing.is_empty(), failing, tolerance, checked }
}

type Objective = dyn Fn(&ParamSet<f64>, &[Tensor<f64>]) -> (f64, ParamSet<f64>, Vec<Tensor<f64>>);

/// A [`GradProblem`] over a parameter set plus named input tensors, driven by
/// a closure returning `(value, parameter grads, input grads)`.
pub struct FnProblem {
    params: ParamSet<f64>,
    input_names: Vec<String>,
    inputs: Vec<Tensor<f64>>,
    f: Box<Objective>,
}

impl FnProblem {
    pub fn new(
        params: ParamSet<f64>,
        inputs: Vec<(String, Tensor<f64>)>,
        f: impl Fn(&ParamSet<f64>, &[Tensor<f64>]) -> (f64, ParamSet<f64>, Vec<Tensor<f64>>) + 'static,
    ) -> Self {
        let (input_names, inputs) = inputs.into_iter().unzip();
        FnProblem { params, input_names, inputs, f: Box::new(f) }
    }
}

impl GradProblem for FnProblem {
    fn block_names(&self) -> Vec<String> {
        self.params.names().iter().cloned().chain(self.input_names.iter().cloned()).collect()
    }

    fn block_mut(&mut self, i: usize) -> &mut [f64] {
        let np = self.params.len();
        if i < np {
            self.params.tensors_mut()[i].data_mut()
        } else {
            self.inputs[i - np].data_mut()
        }
    }

    fn evaluate(&self) -> (f64, Vec<Vec<f64>>) {
        let (v, pg, ig) = (self.f)(&self.params, &self.inputs);
        let grads = pg.tensors().iter().chain(&ig).map(|t| t.data().to_vec()).collect();
        (v, grads)
    }
}

/// Wraps a problem and scales the analytic gradient of one block, to prove
/// the checker catches broken backward passes.
pub struct FaultInjected<P> {
    pub inner: P,
    pub block: String,
    pub factor: f64,
}

impl<P: GradProblem> GradProblem for FaultInjected<P> {
    fn block_names(&self) -> Vec<String> {
        self.inner.block_names()
    }

    fn block_mut(&mut self, i: usize) -> &mut [f64] {
        self.inner.block_mut(i)
    }

    fn evaluate(&self) -> (f64, Vec<Vec<f64>>) {
        let (v, mut g) = self.inner.evaluate();
        if let Some(b) = self.inner.block_names().iter().position(|n| *n == self.block) {
            g[b].iter_mut().for_each(|x| *x *= self.factor);
        }
        (v, g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{xavier_uniform, Dense};
    use crate::rng::rng_from_seed;

    fn dense_problem() -> FnProblem {
        let mut rng = rng_from_seed(1);
        let mut ps = ParamSet::<f64>::new();
        let d = Dense::new(&mut ps, "fc", 3, 2, &mut rng);
        let x = xavier_uniform::<f64>(&[4, 3], 1, 1, &mut rng);
        FnProblem::new(ps, vec![("x".into(), x)], move |ps, inputs| {
            let y = d.forward(ps, &inputs[0]).unwrap();
            let value = y.data().iter().map(|v| v * v).sum::<f64>() / 2.0;
            let mut g = ps.zeros_like();
            let dx = d.backward(ps, &inputs[0], &y, &mut g);
            (value, g, vec![dx])
        })
    }

    #[test]
    fn dense_passes() {
        let r = gradient_check(&mut dense_problem(), 1e-6);
        assert!(r.passed, "{r:?}");
        assert_eq!(r.checked, 3 * 2 + 2 + 4 * 3);
    }

    #[test]
    fn corrupted_gradient_is_named() {
        let mut p = FaultInjected { inner: dense_problem(), block: "fc.w".into(), factor: 2.0 };
        let r = gradient_check(&mut p, 1e-6);
        assert!(!r.passed);
        assert_eq!(r.failing, vec!["fc.w".to_string()]);
        assert_eq!(r.worst_block.as_deref(), Some("fc.w"));
    }
}
