//! Frame sampling for variable-length sequences.
//!
//! All functions keep rows intact: outputs only ever contain rows copied
//! from the input (plus zero rows from [`pad_truncate`]).

use rand::Rng as _;

use super::feature::FeatureSequence;
use crate::rng::Rng;

/// Keeps rows `0, k, 2k, …`.
pub fn downsample_every_k(seq: &FeatureSequence, k: usize) -> FeatureSequence {
    assert!(k >= 1, "downsampling stride must be positive");
    let idx: Vec<usize> = (0..seq.frames()).step_by(k).collect();
    seq.select_rows(&idx)
}

/// Sample sequential augmentation: one uniformly drawn row from every
/// consecutive chunk of `chunk` rows. A shorter trailing chunk still
/// contributes one row, so the output has `ceil(frames / chunk)` rows.
pub fn ssa_sample(seq: &FeatureSequence, chunk: usize, rng: &mut Rng) -> FeatureSequence {
    assert!(chunk >= 1, "chunk length must be positive");
    let n = seq.frames();
    let idx: Vec<usize> = (0..n)
        .step_by(chunk)
        .map(|start| {
            let end = (start + chunk).min(n);
            if end - start == 1 {
                start
            } else {
                rng.gen_range(start..end)
            }
        })
        .collect();
    seq.select_rows(&idx)
}

/// Chunk sequential augmentation: a contiguous block of `window` rows at a
/// uniform random offset. Shorter sequences are returned whole.
pub fn csa_sample(seq: &FeatureSequence, window: usize, rng: &mut Rng) -> FeatureSequence {
    assert!(window >= 1, "window length must be positive");
    let n = seq.frames();
    if n <= window {
        return seq.select_rows(&(0..n).collect::<Vec<_>>());
    }
    let start = rng.gen_range(0..=n - window);
    seq.select_rows(&(start..start + window).collect::<Vec<_>>())
}

/// Brings a sequence to exactly `target` rows and returns it with a validity
/// mask. Short sequences get zero rows appended (mask `false`); long ones
/// are subsampled at rows `round(i·n/target)` so the whole utterance stays
/// covered.
pub fn pad_truncate(seq: &FeatureSequence, target: usize) -> (FeatureSequence, Vec<bool>) {
    assert!(target >= 1, "target length must be positive");
    let n = seq.frames();
    let dim = seq.dim();
    if n > target {
        // round-half-up of i·n/target in integer arithmetic
        let idx: Vec<usize> = (0..target).map(|i| (2 * i * n + target) / (2 * target)).collect();
        return (seq.select_rows(&idx), vec![true; target]);
    }
    let mut data = Vec::with_capacity(target * dim);
    data.extend_from_slice(seq.data());
    data.resize(target * dim, 0.0);
    let mut mask = vec![true; n];
    mask.resize(target, false);
    let out = FeatureSequence::from_rows(target, dim, data).expect("non-empty, finite");
    (out, mask)
}
