use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::real::Real;
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
}

/// How the learning rate shrinks with the step count `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecaySchedule {
    /// `lr0 / (1 + decay·t)`
    #[default]
    TimeBased,
    /// `lr0 · (1 − decay)^t`
    Exponential,
    /// `max(lr0 − decay·t, 0)`
    Subtractive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr0: f64,
    #[serde(default)]
    pub decay: f64,
    #[serde(default)]
    pub schedule: DecaySchedule,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_momentum() -> f64 {
    0.5
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.98
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    /// SGD with momentum 0.5, lr 0.003 and 0.001 decay per step.
    pub fn sgd_momentum() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::SgdMomentum,
            lr0: 0.003,
            decay: 0.001,
            schedule: DecaySchedule::TimeBased,
            momentum: default_momentum(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    /// Adam with fixed lr 0.001, β1 = 0.9, β2 = 0.98.
    pub fn adam() -> Self {
        OptimizerConfig { kind: OptimizerKind::Adam, lr0: 0.001, decay: 0.0, ..Self::sgd_momentum() }
    }

    pub fn learning_rate(&self, t: u64) -> f64 {
        let t = t as f64;
        match self.schedule {
            DecaySchedule::TimeBased => self.lr0 / (1.0 + self.decay * t),
            DecaySchedule::Exponential => self.lr0 * (1.0 - self.decay).powf(t),
            DecaySchedule::Subtractive => (self.lr0 - self.decay * t).max(0.0),
        }
    }
}

/// Optimizer hyperparameters plus per-parameter slot buffers (velocity for
/// SGD; first and second moments for Adam) and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub config: OptimizerConfig,
    pub step: u64,
    pub slot1: Vec<Tensor<T>>,
    pub slot2: Vec<Tensor<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: OptimizerConfig, params: &ParamSet<T>) -> Self {
        let zeros = || params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        let slot2 = if config.kind == OptimizerKind::Adam { zeros() } else { Vec::new() };
        OptimizerState { config, step: 0, slot1: zeros(), slot2 }
    }

    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>) {
        let c = self.config;
        let lr = T::lit(c.learning_rate(self.step));
        match c.kind {
            OptimizerKind::SgdMomentum => {
                let mu = T::lit(c.momentum);
                for ((p, g), v) in params.tensors_mut().iter_mut().zip(grads.tensors()).zip(&mut self.slot1) {
                    for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                        *vv = mu * *vv - lr * gv;
                        *pv += *vv;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (T::lit(c.beta1), T::lit(c.beta2), T::lit(c.eps));
                let t = (self.step + 1) as i32;
                let corr1 = T::one() - b1.powi(t);
                let corr2 = T::one() - b2.powi(t);
                for (((p, g), m), v) in params
                    .tensors_mut()
                    .iter_mut()
                    .zip(grads.tensors())
                    .zip(&mut self.slot1)
                    .zip(&mut self.slot2)
                {
                    for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                        *mv = b1 * *mv + (T::one() - b1) * gv;
                        *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                        let mhat = *mv / corr1;
                        let vhat = *vv / corr2;
                        *pv -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        self.step += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_params(v: f64) -> ParamSet<f64> {
        let mut ps = ParamSet::new();
        ps.add("theta", Tensor::vector(vec![v]));
        ps
    }

    fn sgd(lr0: f64, momentum: f64, decay: f64) -> OptimizerConfig {
        OptimizerConfig { lr0, momentum, decay, ..OptimizerConfig::sgd_momentum() }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        for cfg in [OptimizerConfig::sgd_momentum(), OptimizerConfig::adam()] {
            let mut ps = scalar_params(0.7);
            let g = ps.zeros_like();
            let mut st = OptimizerState::new(cfg, &ps);
            st.step(&mut ps, &g);
            assert_eq!(ps.tensors()[0].data(), &[0.7]);
            assert_eq!(st.step, 1);
        }
    }

    #[test]
    fn plain_gradient_descent_reduction() {
        let mut ps = scalar_params(1.0);
        let mut g = ps.zeros_like();
        g.tensors_mut()[0].data_mut()[0] = 2.0;
        let mut st = OptimizerState::new(sgd(0.1, 0.0, 0.0), &ps);
        st.step(&mut ps, &g);
        assert!((ps.tensors()[0].data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn momentum_recurrence() {
        // v_t = 0.5 v_{t-1} − 0.1 ⇒ deltas −0.1, −0.15, −0.175
        let mut ps = scalar_params(0.0);
        let mut g = ps.zeros_like();
        g.tensors_mut()[0].data_mut()[0] = 1.0;
        let mut st = OptimizerState::new(sgd(0.1, 0.5, 0.0), &ps);
        let mut prev = 0.0;
        for expected in [-0.1, -0.15, -0.175] {
            st.step(&mut ps, &g);
            let now = ps.tensors()[0].data()[0];
            assert!((now - prev - expected).abs() < 1e-15);
            prev = now;
        }
    }

    #[test]
    fn decay_schedules() {
        let c = OptimizerConfig { lr0: 0.003, decay: 0.001, ..OptimizerConfig::sgd_momentum() };
        assert_eq!(c.learning_rate(0), 0.003);
        assert!((c.learning_rate(1000) - 0.0015).abs() < 1e-15);
        let e = OptimizerConfig { schedule: DecaySchedule::Exponential, ..c };
        assert!((e.learning_rate(2) - 0.003 * 0.999 * 0.999).abs() < 1e-15);
        let s = OptimizerConfig { schedule: DecaySchedule::Subtractive, ..c };
        assert_eq!(s.learning_rate(10), 0.0);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut ps = scalar_params(1.0);
        let mut g = ps.zeros_like();
        g.tensors_mut()[0].data_mut()[0] = 3.0;
        let mut st = OptimizerState::new(OptimizerConfig::adam(), &ps);
        st.step(&mut ps, &g);
        assert!((ps.tensors()[0].data()[0] - (1.0 - 0.001)).abs() < 1e-10);
    }

    #[test]
    fn steps_are_deterministic() {
        let run = || {
            let mut ps = scalar_params(0.3);
            let mut g = ps.zeros_like();
            g.tensors_mut()[0].data_mut()[0] = -0.7;
            let mut st = OptimizerState::new(OptimizerConfig::adam(), &ps);
            for _ in 0..5 {
                st.step(&mut ps, &g);
            }
            ps.tensors()[0].data()[0].to_bits()
        };
        assert_eq!(run(), run());
    }
}
