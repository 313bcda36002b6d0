use serde::{Deserialize, Serialize};

use super::real::Real;
use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Debug, Clone)]
pub enum PoolCache {
    /// Winning timestep per channel.
    Max(Vec<usize>),
    /// Valid timesteps that were averaged.
    Avg(Vec<usize>),
}

/// Per-channel max or mean over the timesteps where `mask` is true. Max ties
/// go to the earliest timestep.
pub fn global_pool<T: Real>(map: &Tensor<T>, kind: PoolKind, mask: &[bool]) -> Result<(Vec<T>, PoolCache)> {
    if mask.len() != map.rows() {
        return Err(Error::Shape(format!("mask of {} for {} timesteps", mask.len(), map.rows())));
    }
    let valid: Vec<usize> = (0..map.rows()).filter(|&t| mask[t]).collect();
    if valid.is_empty() {
        return Err(Error::Invalid("global pooling over an empty mask".into()));
    }
    let ch = map.cols();
    match kind {
        PoolKind::Max => {
            let mut best = map.row(valid[0]).to_vec();
            let mut arg = vec![valid[0]; ch];
            for &t in &valid[1..] {
                for (c, &v) in map.row(t).iter().enumerate() {
                    if v > best[c] {
                        best[c] = v;
                        arg[c] = t;
                    }
                }
            }
            Ok((best, PoolCache::Max(arg)))
        }
        PoolKind::Avg => {
            let mut sum = vec![T::zero(); ch];
            for &t in &valid {
                for (s, &v) in sum.iter_mut().zip(map.row(t)) {
                    *s += v;
                }
            }
            let n = T::lit(valid.len() as f64);
            sum.iter_mut().for_each(|s| *s /= n);
            Ok((sum, PoolCache::Avg(valid)))
        }
    }
}

pub fn global_pool_backward<T: Real>(cache: &PoolCache, grad: &[T], rows: usize) -> Tensor<T> {
    let ch = grad.len();
    let mut out = Tensor::zeros(&[rows, ch]);
    match cache {
        PoolCache::Max(arg) => {
            for (c, &t) in arg.iter().enumerate() {
                out.set(t, c, grad[c]);
            }
        }
        PoolCache::Avg(valid) => {
            let n = T::lit(valid.len() as f64);
            for &t in valid {
                for (o, &g) in out.row_mut(t).iter_mut().zip(grad) {
                    *o = g / n;
                }
            }
        }
    }
    out
}
