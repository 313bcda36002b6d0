use crate::nncore::Tensor;
use crate::{Error, Result};

/// Supervised top-k column selection.
pub trait FeatureSelector {
    /// Returns `k` column indices of `x`, most informative first.
    fn select(&self, x: &Tensor<f64>, targets: &[&[f64]], k: usize) -> Result<Vec<usize>>;
}

/// Ranks columns by absolute Pearson correlation with the target; with
/// several targets a column scores its best correlation.
#[derive(Debug, Clone, Copy, Default)]
pub struct PearsonSelector;

impl FeatureSelector for PearsonSelector {
    fn select(&self, x: &Tensor<f64>, targets: &[&[f64]], k: usize) -> Result<Vec<usize>> {
        let (n, d) = (x.rows(), x.cols());
        if n < 2 {
            return Err(Error::Invalid(format!("feature selection needs at least 2 rows, got {n}")));
        }
        if k > d {
            return Err(Error::Invalid(format!("cannot select {k} of {d} features")));
        }
        if targets.iter().any(|y| y.len() != n) {
            return Err(Error::Shape("target length differs from row count".into()));
        }
        let mut scores = vec![0.0f64; d];
        for y in targets {
            for (j, s) in scores.iter_mut().enumerate() {
                *s = s.max(abs_pearson_column(x, j, y));
            }
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order.truncate(k);
        Ok(order)
    }
}

/// |corr(x[:, j], y)| with constant columns (or a constant target) scoring 0.
fn abs_pearson_column(x: &Tensor<f64>, j: usize, y: &[f64]) -> f64 {
    let n = x.rows() as f64;
    let mx = (0..x.rows()).map(|i| x.at(i, j)).sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (i, &yi) in y.iter().enumerate() {
        let dx = x.at(i, j) - mx;
        let dy = yi - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        (sxy / (sxx.sqrt() * syy.sqrt())).abs()
    }
}

/// Top-`k` columns of `x` by |Pearson(x[:, j], y)|, ties to the lower index.
pub fn select_features(x: &Tensor<f64>, y: &[f64], k: usize) -> Result<Vec<usize>> {
    PearsonSelector.select(x, &[y], k)
}
