//! Dense reference solver for the ε-SVR dual, used to validate SMO on small
//! problems. Accelerated projected gradient onto `{0 ≤ β ≤ C, zᵀβ = 0}`;
//! the projection finds the equality multiplier by bisection.

use crate::nncore::Tensor;
use crate::{Error, Result};

use super::svr::{bias_from_gradient, dual_objective, gram_matrix, model_from_beta, SvrParams, SvrSolution};

const MAX_ITER: usize = 2_000_000;

/// Euclidean projection of `v` onto the box ∩ hyperplane.
fn project(v: &[f64], c: f64) -> Vec<f64> {
    let n = v.len() / 2;
    let z = |t: usize| if t < n { 1.0 } else { -1.0 };
    // g(μ) = Σ z_t clip(v_t − μ z_t) is non-increasing in μ.
    let g = |mu: f64| -> f64 { (0..v.len()).map(|t| z(t) * (v[t] - mu * z(t)).clamp(0.0, c)).sum() };
    let span = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * span {
            break;
        }
    }
    let mu = 0.5 * (lo + hi);
    (0..v.len()).map(|t| (v[t] - mu * z(t)).clamp(0.0, c)).collect()
}

fn gradient(kernel: &[f64], y: &[f64], eps: f64, beta: &[f64]) -> Vec<f64> {
    let n = y.len();
    let coef: Vec<f64> = (0..n).map(|i| beta[i] - beta[i + n]).collect();
    let kc: Vec<f64> = (0..n).map(|i| (0..n).map(|j| kernel[i * n + j] * coef[j]).sum()).collect();
    (0..2 * n).map(|t| if t < n { kc[t] + eps - y[t] } else { -kc[t - n] + eps + y[t - n] }).collect()
}

/// Solves the dual to `tolerance` in the iterate change (max-norm). Meant for
/// n up to a few dozen points.
pub fn qp_oracle(x: &Tensor<f64>, y: &[f64], params: &SvrParams, tolerance: f64) -> Result<SvrSolution> {
    let n = y.len();
    if x.rows() != n || n < 2 {
        return Err(Error::Shape(format!("{} targets for {:?} inputs", n, x.shape())));
    }
    let c = params.c;
    let kernel = gram_matrix(x, params.gamma);
    // Lipschitz bound on ∇: ‖Q‖₂ ≤ 2·max row sum of |K|.
    let lip = 2.0 * (0..n).map(|i| kernel[i * n..(i + 1) * n].iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lip;

    let mut beta = vec![0.0; 2 * n];
    let mut look = beta.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < MAX_ITER {
        iterations += 1;
        let g = gradient(&kernel, y, params.epsilon, &look);
        let trial: Vec<f64> = look.iter().zip(&g).map(|(b, gi)| b - step * gi).collect();
        let next = project(&trial, c);
        change = next.iter().zip(&beta).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        // Restart momentum when it points uphill.
        let uphill: f64 = g.iter().zip(next.iter().zip(&beta)).map(|(gi, (a, b))| gi * (a - b)).sum();
        let t_next = if uphill > 0.0 { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
        let mom = if uphill > 0.0 { 0.0 } else { (t - 1.0) / t_next };
        look = next.iter().zip(&beta).map(|(a, b)| a + mom * (a - b)).collect();
        beta = next;
        t = t_next;
        if change < tolerance && iterations > 10 {
            break;
        }
    }
    if change >= tolerance {
        return Err(Error::NonConvergence { iterations, gap: change });
    }
    // Snap numerically bound variables so the bias rule sees them as bound.
    let snap = 1e3 * tolerance.max(f64::EPSILON) * c.max(1.0);
    for b in &mut beta {
        if *b < snap {
            *b = 0.0;
        } else if *b > c - snap {
            *b = c;
        }
    }
    let grad = gradient(&kernel, y, params.epsilon, &beta);
    let bias = bias_from_gradient(&beta, &grad, c);
    let objective = dual_objective(&kernel, y, params.epsilon, &beta);
    Ok(SvrSolution { model: model_from_beta(x, &beta, bias, params), beta, objective, iterations, gap: change })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::svr::{svr_predict, svr_solve};
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    #[test]
    fn projection_is_feasible_and_idempotent() {
        let mut rng = rng_from_seed(5);
        for _ in 0..50 {
            let v: Vec<f64> = (0..8).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let p = project(&v, 1.5);
            let s: f64 = p[..4].iter().sum::<f64>() - p[4..].iter().sum::<f64>();
            assert!(s.abs() < 1e-9);
            assert!(p.iter().all(|&b| (0.0..=1.5).contains(&b)));
            let pp = project(&p, 1.5);
            assert!(p.iter().zip(&pp).all(|(a, b)| (a - b).abs() < 1e-9));
        }
    }

    #[test]
    fn smo_matches_oracle_on_small_instance() {
        let mut rng = rng_from_seed(8);
        let (n, d) = (8, 3);
        let x = Tensor::from_vec(&[n, d], (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = SvrParams::new(2.0, d);
        let smo = svr_solve(&x, &y, &p).unwrap();
        let qp = qp_oracle(&x, &y, &p, 1e-10).unwrap();
        assert!((smo.objective - qp.objective).abs() <= 1e-3 * qp.objective.abs());
        for i in 0..n {
            let (a, b) = (svr_predict(&smo.model, x.row(i)).unwrap(), svr_predict(&qp.model, x.row(i)).unwrap());
            assert!((a - b).abs() <= 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn duplicating_a_point_never_raises_the_minimum() {
        // In minimisation form a larger feasible set can only lower the
        // optimum (the maximisation-form dual never decreases).
        let mut rng = rng_from_seed(9);
        for _ in 0..10 {
            let (n, d) = (6, 2);
            let x = Tensor::from_vec(&[n, d], (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = SvrParams::new(1.0, d);
            let base = qp_oracle(&x, &y, &p, 1e-11).unwrap();
            let k = rng.gen_range(0..n);
            let mut rows: Vec<usize> = (0..n).collect();
            rows.push(k);
            let mut y2 = y.clone();
            y2.push(y[k]);
            let dup = qp_oracle(&x.gather_rows(&rows), &y2, &p, 1e-11).unwrap();
            assert!(dup.objective <= base.objective + 1e-8);
        }
    }
}
