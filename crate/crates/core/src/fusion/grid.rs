use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::ccc;
use crate::nncore::Tensor;
use crate::{Error, Result};

use super::svr::{gram_matrix, svr_predict, svr_train_subset, SvrParams};

pub fn default_c_grid() -> Vec<f64> {
    vec![0.1, 0.3, 1.0, 3.0, 10.0, 30.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub candidates: Vec<f64>,
    /// Mean held-out-fold CCC per candidate.
    pub scores: Vec<f64>,
    pub chosen: f64,
}

/// Row indices of each fold, validating that every fold can be scored.
pub(crate) fn fold_rows(fold_of_row: &[usize]) -> Result<Vec<Vec<usize>>> {
    let k = fold_of_row.iter().max().map_or(0, |m| m + 1);
    let mut rows = vec![Vec::new(); k];
    for (i, &f) in fold_of_row.iter().enumerate() {
        rows[f].push(i);
    }
    if k < 2 {
        return Err(Error::Invalid("cross-validation needs at least 2 folds".into()));
    }
    if let Some(f) = rows.iter().position(|r| r.len() < 2) {
        return Err(Error::Invalid(format!("fold {f} has {} held-out points; CCC needs 2", rows[f].len())));
    }
    Ok(rows)
}

/// k-fold CV over `grid`; `fold_of_row[i]` is the fold of row `i`. Scores
/// are mean per-fold CCC; the best score wins, ties to the smallest C.
/// `base` supplies ε, γ and solver settings.
pub fn grid_search_c(x: &Tensor<f64>, y: &[f64], grid: &[f64], fold_of_row: &[usize], base: &SvrParams) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::Invalid("empty C grid".into()));
    }
    if fold_of_row.len() != y.len() || x.rows() != y.len() {
        return Err(Error::Shape("fold assignment, inputs and targets differ in length".into()));
    }
    let folds = fold_rows(fold_of_row)?;
    let kernel = gram_matrix(x, base.gamma);
    let scores = grid
        .par_iter()
        .map(|&c| {
            let p = SvrParams { c, ..*base };
            let mut total = 0.0;
            for held in &folds {
                let train: Vec<usize> = (0..y.len()).filter(|i| !held.contains(i)).collect();
                let model = svr_train_subset(x, &kernel, y, &train, &p)?;
                let pred = held.iter().map(|&i| svr_predict(&model, x.row(i))).collect::<Result<Vec<_>>>()?;
                let truth: Vec<f64> = held.iter().map(|&i| y[i]).collect();
                total += ccc(&pred, &truth)?;
            }
            Ok(total / folds.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for i in 1..grid.len() {
        if scores[i] > scores[best] || (scores[i] == scores[best] && grid[i] < grid[best]) {
            best = i;
        }
    }
    Ok(GridSearchResult { candidates: grid.to_vec(), scores, chosen: grid[best] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::svr::svr_train;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    fn smooth_problem(n: usize) -> (Tensor<f64>, Vec<f64>, Vec<usize>) {
        let mut rng = rng_from_seed(21);
        let x = Tensor::from_vec(&[n, 2], (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let y = (0..n).map(|i| (2.0f64 * x.at(i, 0)).sin() + 0.5 * x.at(i, 1) * x.at(i, 1)).collect();
        let folds = (0..n).map(|i| i % 4).collect();
        (x, y, folds)
    }

    #[test]
    fn matches_an_independent_rerun_of_the_cv_loop() {
        let (x, y, folds) = smooth_problem(40);
        let base = SvrParams::new(1.0, 2);
        let grid = default_c_grid();
        let r = grid_search_c(&x, &y, &grid, &folds, &base).unwrap();
        for (k, &c) in grid.iter().enumerate() {
            let mut total = 0.0;
            for f in 0..4 {
                let tr: Vec<usize> = (0..40).filter(|i| folds[*i] != f).collect();
                let te: Vec<usize> = (0..40).filter(|i| folds[*i] == f).collect();
                let ytr: Vec<f64> = tr.iter().map(|&i| y[i]).collect();
                let m = svr_train(&x.gather_rows(&tr), &ytr, &SvrParams { c, ..base }).unwrap();
                let p: Vec<f64> = te.iter().map(|&i| svr_predict(&m, x.row(i)).unwrap()).collect();
                let t: Vec<f64> = te.iter().map(|&i| y[i]).collect();
                total += ccc(&p, &t).unwrap();
            }
            assert!((r.scores[k] - total / 4.0).abs() < 1e-12);
        }
        let best = r.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.scores[r.candidates.iter().position(|&c| c == r.chosen).unwrap()], best);
    }

    #[test]
    fn single_candidate_and_ties() {
        let (x, y, folds) = smooth_problem(20);
        let base = SvrParams::new(1.0, 2);
        assert_eq!(grid_search_c(&x, &y, &[3.0], &folds, &base).unwrap().chosen, 3.0);
        // A tube wider than the targets leaves every model at its bias, so all
        // candidates score CCC 0.
        let wide = SvrParams { epsilon: 100.0, ..base };
        let r = grid_search_c(&x, &y, &[5.0, 0.3, 2.0], &folds, &wide).unwrap();
        assert_eq!(r.scores, vec![0.0; 3]);
        assert_eq!(r.chosen, 0.3);
    }

    #[test]
    fn tiny_fold_is_an_error() {
        let (x, y, mut folds) = smooth_problem(10);
        folds.iter_mut().for_each(|f| *f = 0);
        folds[9] = 1;
        assert!(grid_search_c(&x, &y, &[1.0], &folds, &SvrParams::new(1.0, 2)).is_err());
    }
}
