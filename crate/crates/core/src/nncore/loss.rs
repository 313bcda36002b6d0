use serde::{Deserialize, Serialize};

use super::real::Real;
use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Mae,
    Ccc,
    CccPlusMse,
    CccPlusMae,
}

/// Loss selection; `lambda` weights the CCC term of the combined kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl LossSpec {
    pub const DEFAULT_LAMBDA: f64 = 0.5;

    pub fn new(kind: LossKind) -> Self {
        let lambda = match kind {
            LossKind::CccPlusMse | LossKind::CccPlusMae => Some(Self::DEFAULT_LAMBDA),
            _ => None,
        };
        LossSpec { kind, lambda }
    }

    pub fn uses_ccc(&self) -> bool {
        !matches!(self.kind, LossKind::Mse | LossKind::Mae)
    }

    pub fn validate(&self) -> Result<()> {
        let combined = matches!(self.kind, LossKind::CccPlusMse | LossKind::CccPlusMae);
        match (combined, self.lambda) {
            (true, Some(l)) if (0.0..=1.0).contains(&l) => Ok(()),
            (true, _) => Err(Error::Invalid("combined loss needs lambda in [0, 1]".into())),
            (false, None) => Ok(()),
            (false, Some(_)) => Err(Error::Invalid("lambda only applies to combined losses".into())),
        }
    }
}

fn mse<T: Real>(pred: &Tensor<T>, truth: &Tensor<T>, grad: &mut [T], weight: T) -> T {
    let n = T::lit(pred.len() as f64);
    let mut sum = T::zero();
    for ((g, &p), &t) in grad.iter_mut().zip(pred.data()).zip(truth.data()) {
        let d = p - t;
        sum += d * d;
        *g += weight * (d + d) / n;
    }
    sum / n
}

fn mae<T: Real>(pred: &Tensor<T>, truth: &Tensor<T>, grad: &mut [T], weight: T) -> T {
    let n = T::lit(pred.len() as f64);
    let mut sum = T::zero();
    for ((g, &p), &t) in grad.iter_mut().zip(pred.data()).zip(truth.data()) {
        let d = p - t;
        sum += d.abs();
        let sign = if d > T::zero() {
            T::one()
        } else if d < T::zero() {
            -T::one()
        } else {
            T::zero()
        };
        *g += weight * sign / n;
    }
    sum / n
}

/// Mean over target columns of `1 − CCC(pred_col, truth_col)` with
/// population moments.
fn ccc_loss<T: Real>(pred: &Tensor<T>, truth: &Tensor<T>, grad: &mut [T], weight: T) -> Result<T> {
    let (n, cols) = (pred.rows(), pred.cols());
    let nn = T::lit(n as f64);
    let two = T::lit(2.0);
    let mut total = T::zero();
    for c in 0..cols {
        let x: Vec<T> = (0..n).map(|r| pred.at(r, c)).collect();
        let y: Vec<T> = (0..n).map(|r| truth.at(r, c)).collect();
        let mx = x.iter().copied().sum::<T>() / nn;
        let my = y.iter().copied().sum::<T>() / nn;
        let (mut vx, mut vy, mut cov) = (T::zero(), T::zero(), T::zero());
        for (&a, &b) in x.iter().zip(&y) {
            vx += (a - mx) * (a - mx);
            vy += (b - my) * (b - my);
            cov += (a - mx) * (b - my);
        }
        vx /= nn;
        vy /= nn;
        cov /= nn;
        if vx == T::zero() || vy == T::zero() {
            let which = if vx == T::zero() { "prediction" } else { "target" };
            return Err(Error::UndefinedCorrelation(format!("zero-variance {which} column {c} in batch CCC loss")));
        }
        let gap = mx - my;
        let den = vx + vy + gap * gap;
        let num = two * cov;
        total += T::one() - num / den;
        let scale = weight / T::lit(cols as f64);
        for (r, &a) in x.iter().enumerate() {
            let dnum = two * (y[r] - my) / nn;
            let dden = two * (a - mx) / nn + two * gap / nn;
            let dccc = (dnum * den - num * dden) / (den * den);
            grad[r * cols + c] -= scale * dccc;
        }
    }
    Ok(total / T::lit(cols as f64))
}

/// Loss value and its gradient with respect to `pred` (batch × targets).
pub fn loss_eval<T: Real>(pred: &Tensor<T>, truth: &Tensor<T>, spec: &LossSpec) -> Result<(T, Tensor<T>)> {
    if pred.shape() != truth.shape() {
        return Err(Error::Shape(format!("pred {:?} vs truth {:?}", pred.shape(), truth.shape())));
    }
    if pred.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    if spec.uses_ccc() && pred.rows() < 2 {
        return Err(Error::Invalid("batch CCC needs at least 2 rows".into()));
    }
    let mut grad = Tensor::zeros(pred.shape());
    let g = grad.data_mut();
    let lambda = T::lit(spec.lambda.unwrap_or(LossSpec::DEFAULT_LAMBDA));
    let rest = T::one() - lambda;
    let value = match spec.kind {
        LossKind::Mse => mse(pred, truth, g, T::one()),
        LossKind::Mae => mae(pred, truth, g, T::one()),
        LossKind::Ccc => ccc_loss(pred, truth, g, T::one())?,
        LossKind::CccPlusMse => lambda * ccc_loss(pred, truth, g, lambda)? + rest * mse(pred, truth, g, rest),
        LossKind::CccPlusMae => lambda * ccc_loss(pred, truth, g, lambda)? + rest * mae(pred, truth, g, rest),
    };
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::gradcheck::{gradient_check, FnProblem};
    use crate::nncore::{xavier_uniform, ParamSet};
    use crate::rng::rng_from_seed;

    const ALL: [LossKind; 5] = [LossKind::Mse, LossKind::Mae, LossKind::Ccc, LossKind::CccPlusMse, LossKind::CccPlusMae];

    #[test]
    fn perfect_prediction_is_zero_loss() {
        let t = Tensor::matrix(3, 2, vec![0.1f64, -0.5, 0.4, 0.2, 0.9, 0.0]).unwrap();
        for kind in ALL {
            let (v, _) = loss_eval(&t, &t, &LossSpec::new(kind)).unwrap();
            assert!(v.abs() < 1e-15, "{kind:?} gave {v}");
        }
    }

    #[test]
    fn mae_gradient_sign_structure() {
        let p = Tensor::matrix(2, 2, vec![1.0f64, 0.0, 0.5, 2.0]).unwrap();
        let t = Tensor::matrix(2, 2, vec![0.0f64, 0.0, 1.0, 1.0]).unwrap();
        let (_, g) = loss_eval(&p, &t, &LossSpec::new(LossKind::Mae)).unwrap();
        assert_eq!(g.data(), &[0.25, 0.0, -0.25, 0.25]);
    }

    #[test]
    fn ccc_loss_errors() {
        let one = Tensor::matrix(1, 2, vec![0.1f64, 0.2]).unwrap();
        assert!(loss_eval(&one, &one, &LossSpec::new(LossKind::Ccc)).is_err());
        let flat = Tensor::matrix(3, 1, vec![0.5f64, 0.5, 0.5]).unwrap();
        let t = Tensor::matrix(3, 1, vec![0.1f64, 0.2, 0.3]).unwrap();
        assert!(matches!(loss_eval(&flat, &t, &LossSpec::new(LossKind::Ccc)), Err(Error::UndefinedCorrelation(_))));
        assert!(matches!(loss_eval(&t, &flat, &LossSpec::new(LossKind::Ccc)), Err(Error::UndefinedCorrelation(_))));
        assert!(LossSpec { kind: LossKind::Mse, lambda: Some(0.3) }.validate().is_err());
        assert!(LossSpec { kind: LossKind::CccPlusMae, lambda: Some(1.3) }.validate().is_err());
    }

    #[test]
    fn ccc_loss_matches_metric() {
        let p = Tensor::matrix(3, 1, vec![1.0f64, 2.0, 3.0]).unwrap();
        let t = Tensor::matrix(3, 1, vec![2.0f64, 3.0, 4.0]).unwrap();
        let (v, _) = loss_eval(&p, &t, &LossSpec::new(LossKind::Ccc)).unwrap();
        assert!((v - (1.0 - 4.0 / 7.0)).abs() < 1e-15);
    }

    #[test]
    fn symmetric_in_arguments() {
        let mut rng = rng_from_seed(9);
        let a = xavier_uniform::<f64>(&[6, 2], 1, 1, &mut rng);
        let b = xavier_uniform::<f64>(&[6, 2], 1, 1, &mut rng);
        for kind in ALL {
            let s = LossSpec::new(kind);
            let (x, _) = loss_eval(&a, &b, &s).unwrap();
            let (y, _) = loss_eval(&b, &a, &s).unwrap();
            assert!((x - y).abs() < 1e-14, "{kind:?}");
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        for seed in 0..20 {
            let mut rng = rng_from_seed(700 + seed);
            let pred = xavier_uniform::<f64>(&[8, 2], 1, 1, &mut rng);
            let truth = xavier_uniform::<f64>(&[8, 2], 1, 1, &mut rng);
            for kind in ALL {
                let t = truth.clone();
                let mut prob = FnProblem::new(ParamSet::new(), vec![("pred".into(), pred.clone())], move |ps, inp| {
                    let (v, g) = loss_eval(&inp[0], &t, &LossSpec::new(kind)).unwrap();
                    (v, ps.zeros_like(), vec![g])
                });
                let r = gradient_check(&mut prob, 1e-6);
                assert!(r.passed, "{kind:?} seed {seed}: {r:?}");
            }
        }
    }
}
