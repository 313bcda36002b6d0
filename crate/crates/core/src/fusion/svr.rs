//! ε-support vector regression with an RBF kernel, solved by SMO.
//!
//! The dual is written over 2n variables `β = [α; α*]` with signs
//! `z = [+1…; −1…]`:
//!
//! ```text
//! min ½ βᵀQβ + pᵀβ   s.t.  zᵀβ = 0,  0 ≤ β ≤ C
//! Q_st = z_s z_t K(x_s, x_t),  p = [ε − y; ε + y]
//! ```
//!
//! and the regression function is `f(x) = Σ (α_i − α*_i) K(x_i, x) + b`.

use serde::{Deserialize, Serialize};

use crate::nncore::Tensor;
use crate::{Error, Result};

/// Curvature floor for non-positive-definite pairs.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: f64,
    /// KKT violation tolerance (maximal violating pair gap).
    pub tolerance: f64,
    /// `None` → `max(10000, 1000·n)` pair updates.
    pub max_iter: Option<usize>,
}

impl SvrParams {
    pub const DEFAULT_EPSILON: f64 = 0.1;
    pub const DEFAULT_TOLERANCE: f64 = 1e-3;

    /// Defaults for `d`-dimensional inputs: ε = 0.1, γ = 1/d, tolerance 1e-3.
    pub fn new(c: f64, d: usize) -> Self {
        SvrParams {
            c,
            epsilon: Self::DEFAULT_EPSILON,
            gamma: 1.0 / d.max(1) as f64,
            tolerance: Self::DEFAULT_TOLERANCE,
            max_iter: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.epsilon >= 0.0) || !(self.gamma > 0.0) || !(self.tolerance > 0.0) {
            return Err(Error::Invalid(format!(
                "SVR needs C > 0, epsilon >= 0, gamma > 0, tolerance > 0 (got C={}, eps={}, gamma={}, tol={})",
                self.c, self.epsilon, self.gamma, self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    /// m × d; only rows with non-zero coefficients are kept.
    pub support_vectors: Tensor<f64>,
    /// α − α* per support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub epsilon: f64,
}

/// Full dual state, mainly for inspection and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrSolution {
    pub model: SvrModel,
    /// `[α; α*]` for every training point.
    pub beta: Vec<f64>,
    /// Dual objective `½βᵀQβ + pᵀβ` (minimisation form).
    pub objective: f64,
    pub iterations: usize,
    /// Final maximal violating pair gap.
    pub gap: f64,
}

pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("kernel inputs of dim {} and {}", x.len(), y.len())));
    }
    if !(gamma > 0.0) {
        return Err(Error::Invalid(format!("gamma must be positive, got {gamma}")));
    }
    Ok(rbf(x, y, gamma))
}

/// The squared terms are summed in sorted order so the kernel is exactly
/// invariant to permuting feature columns (e.g. reordering fusion members).
fn rbf(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let mut sq: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).collect();
    sq.sort_unstable_by(f64::total_cmp);
    let d2: f64 = sq.iter().sum();
    (-gamma * d2).exp()
}

/// n × n RBF Gram matrix, row-major.
pub fn gram_matrix(x: &Tensor<f64>, gamma: f64) -> Vec<f64> {
    let n = x.rows();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let v = rbf(x.row(i), x.row(j), gamma);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

pub(crate) fn dual_objective(kernel: &[f64], y: &[f64], epsilon: f64, beta: &[f64]) -> f64 {
    let n = y.len();
    let coef: Vec<f64> = (0..n).map(|i| beta[i] - beta[i + n]).collect();
    let mut quad = 0.0;
    for i in 0..n {
        if coef[i] == 0.0 {
            continue;
        }
        let row = &kernel[i * n..(i + 1) * n];
        quad += coef[i] * row.iter().zip(&coef).map(|(k, c)| k * c).sum::<f64>();
    }
    let lin: f64 = (0..n).map(|i| epsilon * (beta[i] + beta[i + n]) - y[i] * coef[i]).sum();
    0.5 * quad + lin
}

/// Bias from the gradient at a dual point: mean of `−z_t G_t` over free
/// variables, or the midpoint of the feasible interval when none are free.
pub(crate) fn bias_from_gradient(beta: &[f64], grad: &[f64], c: f64) -> f64 {
    let n2 = beta.len();
    let n = n2 / 2;
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut nr_free) = (0.0, 0usize);
    for t in 0..n2 {
        let z = if t < n { 1.0 } else { -1.0 };
        let yg = z * grad[t];
        if beta[t] >= c {
            if z < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if beta[t] <= 0.0 {
            if z > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            nr_free += 1;
            sum_free += yg;
        }
    }
    let rho = if nr_free > 0 { sum_free / nr_free as f64 } else { (ub + lb) / 2.0 };
    -rho
}

pub(crate) fn model_from_beta(x: &Tensor<f64>, beta: &[f64], bias: f64, p: &SvrParams) -> SvrModel {
    let n = x.rows();
    let keep: Vec<usize> = (0..n).filter(|&i| beta[i] - beta[i + n] != 0.0).collect();
    let sv = if keep.is_empty() { Tensor::zeros(&[0, x.cols()]) } else { x.gather_rows(&keep) };
    SvrModel {
        support_vectors: sv,
        dual_coefs: keep.iter().map(|&i| beta[i] - beta[i + n]).collect(),
        bias,
        gamma: p.gamma,
        c: p.c,
        epsilon: p.epsilon,
    }
}

fn check_xy(x: &Tensor<f64>, y: &[f64]) -> Result<()> {
    if x.shape().len() != 2 || x.rows() != y.len() {
        return Err(Error::Shape(format!("{} targets for {:?} inputs", y.len(), x.shape())));
    }
    if y.len() < 2 {
        return Err(Error::Invalid(format!("SVR needs at least 2 training points, got {}", y.len())));
    }
    if !x.all_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite SVR training data".into()));
    }
    Ok(())
}

pub fn svr_train(x: &Tensor<f64>, y: &[f64], params: &SvrParams) -> Result<SvrModel> {
    Ok(svr_solve(x, y, params)?.model)
}

pub fn svr_solve(x: &Tensor<f64>, y: &[f64], params: &SvrParams) -> Result<SvrSolution> {
    check_xy(x, y)?;
    params.validate()?;
    let kernel = gram_matrix(x, params.gamma);
    let (beta, grad, iterations, gap) = smo(&kernel, y, params)?;
    let bias = bias_from_gradient(&beta, &grad, params.c);
    let objective = dual_objective(&kernel, y, params.epsilon, &beta);
    Ok(SvrSolution { model: model_from_beta(x, &beta, bias, params), beta, objective, iterations, gap })
}

/// Trains on the rows `idx` of a precomputed Gram matrix over `x`.
pub(crate) fn svr_train_subset(x: &Tensor<f64>, kernel: &[f64], y: &[f64], idx: &[usize], params: &SvrParams) -> Result<SvrModel> {
    let n = x.rows();
    let m = idx.len();
    let mut sub = vec![0.0; m * m];
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            sub[a * m + b] = kernel[i * n + j];
        }
    }
    let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let xs = x.gather_rows(idx);
    check_xy(&xs, &ys)?;
    params.validate()?;
    let (beta, grad, _, _) = smo(&sub, &ys, params)?;
    let bias = bias_from_gradient(&beta, &grad, params.c);
    Ok(model_from_beta(&xs, &beta, bias, params))
}

/// SMO with maximal-violating-pair working set selection. Returns
/// `(β, ∇, iterations, gap)`.
fn smo(kernel: &[f64], y: &[f64], p: &SvrParams) -> Result<(Vec<f64>, Vec<f64>, usize, f64)> {
    let n = y.len();
    let n2 = 2 * n;
    let c = p.c;
    let max_iter = p.max_iter.unwrap_or((1000 * n).max(10_000));
    let z = |t: usize| if t < n { 1.0 } else { -1.0 };
    let q = |s: usize, t: usize| z(s) * z(t) * kernel[(s % n) * n + t % n];
    let mut beta = vec![0.0; n2];
    let mut grad: Vec<f64> = (0..n2).map(|t| if t < n { p.epsilon - y[t] } else { p.epsilon + y[t - n] }).collect();

    let mut iter = 0;
    loop {
        // i maximises −z G over I_up, j minimises it over I_low. Ties go to
        // the lower sample index, then to α for i and α* for j, which keeps
        // the iteration exactly equivariant under y → −y.
        let (mut gmax, mut i) = (f64::NEG_INFINITY, usize::MAX);
        let (mut gmin, mut j) = (f64::INFINITY, usize::MAX);
        for s in 0..n {
            for t in [s, s + n] {
                let v = -z(t) * grad[t];
                let up = if t < n { beta[t] < c } else { beta[t] > 0.0 };
                if up && v > gmax {
                    gmax = v;
                    i = t;
                }
            }
            for t in [s + n, s] {
                let v = -z(t) * grad[t];
                let low = if t < n { beta[t] > 0.0 } else { beta[t] < c };
                if low && v < gmin {
                    gmin = v;
                    j = t;
                }
            }
        }
        let gap = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || gap < p.tolerance {
            return Ok((beta, grad, iter, gap.max(0.0)));
        }
        if iter >= max_iter {
            return Err(Error::NonConvergence { iterations: iter, gap });
        }
        iter += 1;

        let (old_i, old_j) = (beta[i], beta[j]);
        let qij = q(i, j);
        let (qii, qjj) = (q(i, i), q(j, j));
        if z(i) != z(j) {
            let quad = (qii + qjj + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = beta[i] - beta[j];
            beta[i] += delta;
            beta[j] += delta;
            if diff > 0.0 {
                if beta[j] < 0.0 {
                    beta[j] = 0.0;
                    beta[i] = diff;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = -diff;
            }
            if diff > 0.0 {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = c - diff;
                }
            } else if beta[j] > c {
                beta[j] = c;
                beta[i] = c + diff;
            }
        } else {
            let quad = (qii + qjj - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = beta[i] + beta[j];
            beta[i] -= delta;
            beta[j] += delta;
            if sum > c {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = sum - c;
                }
            } else if beta[j] < 0.0 {
                beta[j] = 0.0;
                beta[i] = sum;
            }
            if sum > c {
                if beta[j] > c {
                    beta[j] = c;
                    beta[i] = sum - c;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = sum;
            }
        }
        let (di, dj) = (beta[i] - old_i, beta[j] - old_j);
        for t in 0..n2 {
            grad[t] += q(i, t) * di + q(j, t) * dj;
        }
    }
}

pub fn svr_predict(model: &SvrModel, x: &[f64]) -> Result<f64> {
    if model.support_vectors.rows() > 0 && x.len() != model.support_vectors.cols() {
        return Err(Error::Shape(format!("SVR expects {}-D input, got {}", model.support_vectors.cols(), x.len())));
    }
    let mut f = model.bias;
    for (k, &a) in model.dual_coefs.iter().enumerate() {
        f += a * rbf(model.support_vectors.row(k), x, model.gamma);
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    fn random_problem(n: usize, d: usize, seed: u64) -> (Tensor<f64>, Vec<f64>) {
        let mut rng = rng_from_seed(seed);
        let x = Tensor::from_vec(&[n, d], (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let y = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (x, y)
    }

    #[test]
    fn kernel_examples() {
        assert!((rbf_kernel(&[0.0, 0.0], &[1.0, 1.0], 0.5).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(rbf_kernel(&[0.3, -2.0], &[0.3, -2.0], 0.1).unwrap(), 1.0);
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[3.0, 5.0], 0.2).unwrap(), rbf_kernel(&[3.0, 5.0], &[1.0, 2.0], 0.2).unwrap());
        assert!(rbf_kernel(&[1.0], &[1.0, 2.0], 0.2).is_err());
        assert!(rbf_kernel(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn constant_target_is_fit_by_bias_alone() {
        let (x, _) = random_problem(6, 3, 1);
        let m = svr_train(&x, &[0.4; 6], &SvrParams::new(1.0, 3)).unwrap();
        assert!(m.dual_coefs.is_empty());
        assert_eq!(m.bias, 0.4);
        assert_eq!(svr_predict(&m, &[9.0, 9.0, 9.0]).unwrap(), 0.4);
    }

    #[test]
    fn negating_targets_negates_the_solution() {
        let (x, y) = random_problem(12, 4, 2);
        let p = SvrParams::new(2.0, 4);
        let a = svr_train(&x, &y, &p).unwrap();
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let b = svr_train(&x, &neg, &p).unwrap();
        assert_eq!(a.support_vectors, b.support_vectors);
        for (u, v) in a.dual_coefs.iter().zip(&b.dual_coefs) {
            assert!((u + v).abs() < 1e-12, "{u} {v}");
        }
        assert!((a.bias + b.bias).abs() < 1e-12, "{} {}", a.bias, b.bias);
    }

    #[test]
    fn solution_respects_constraints_and_kkt() {
        for seed in 0..20 {
            let (x, y) = random_problem(15, 3, 10 + seed);
            let p = SvrParams { tolerance: 1e-4, ..SvrParams::new(1.5, 3) };
            let s = svr_solve(&x, &y, &p).unwrap();
            let m = &s.model;
            assert!(m.dual_coefs.iter().sum::<f64>().abs() < 1e-8);
            assert!(m.dual_coefs.iter().all(|a| a.abs() <= p.c));
            let n = y.len();
            for i in 0..n {
                let r = (svr_predict(m, x.row(i)).unwrap() - y[i]).abs();
                let a = (s.beta[i] - s.beta[i + n]).abs();
                let tol = 1e-3;
                if a == 0.0 {
                    assert!(r <= p.epsilon + tol, "seed {seed} i {i}: zero coef but residual {r}");
                } else if a >= p.c {
                    assert!(r >= p.epsilon - tol);
                } else {
                    assert!((r - p.epsilon).abs() <= tol, "free residual {r}");
                }
            }
        }
    }

    #[test]
    fn prediction_matches_direct_expansion() {
        let (x, y) = random_problem(10, 5, 3);
        let m = svr_train(&x, &y, &SvrParams::new(3.0, 5)).unwrap();
        let q = [0.1, -0.2, 0.3, 0.0, 0.5];
        let mut direct = m.bias;
        for k in 0..m.dual_coefs.len() {
            let d2: f64 = m.support_vectors.row(k).iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum();
            direct += m.dual_coefs[k] * (-m.gamma * d2).exp();
        }
        assert!((svr_predict(&m, &q).unwrap() - direct).abs() <= 1e-12);
        let empty = SvrModel { support_vectors: Tensor::zeros(&[0, 5]), dual_coefs: vec![], bias: 0.7, gamma: 0.2, c: 1.0, epsilon: 0.1 };
        assert_eq!(svr_predict(&empty, &q).unwrap(), 0.7);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (x, y) = random_problem(4, 2, 0);
        assert!(svr_train(&x, &y[..3], &SvrParams::new(1.0, 2)).is_err());
        assert!(svr_train(&x.slice_rows(0, 1), &y[..1], &SvrParams::new(1.0, 2)).is_err());
        assert!(svr_train(&x, &y, &SvrParams::new(0.0, 2)).is_err());
        let p = SvrParams { max_iter: Some(1), tolerance: 1e-12, ..SvrParams::new(10.0, 2) };
        assert!(matches!(svr_train(&x, &y, &p), Err(Error::NonConvergence { .. })));
    }
}
