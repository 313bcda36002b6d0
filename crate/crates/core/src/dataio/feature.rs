use std::fs;
use std::path::Path;

use crate::nncore::{Real, Tensor};
use crate::{Error, Result, TensorFileError};

const MAGIC: &[u8; 4] = b"AFF1";

/// A frames × dim matrix of single-precision features for one utterance.
///
/// Rank-1 files (a single vector, e.g. hand-crafted audio features or a raw
/// waveform) load as one row and remember their rank so they are written
/// back in the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    rank: u8,
    frames: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureSequence {
    pub fn from_rows(frames: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        Self::build(2, frames, dim, data)
    }

    pub fn vector(data: Vec<f32>) -> Result<Self> {
        let dim = data.len();
        Self::build(1, 1, dim, data)
    }

    fn build(rank: u8, frames: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if frames == 0 || dim == 0 {
            return Err(Error::Shape(format!("empty feature sequence {frames}x{dim}")));
        }
        if data.len() != frames * dim {
            return Err(Error::Shape(format!(
                "{frames}x{dim} sequence needs {} values, got {}",
                frames * dim,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Shape(format!("non-finite feature at element {i}")));
        }
        Ok(FeatureSequence { rank, frames, dim, data })
    }

    pub fn rank(&self) -> u8 {
        self.rank
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// New rank-2 sequence made of the listed rows.
    pub fn select_rows(&self, idx: &[usize]) -> FeatureSequence {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureSequence { rank: 2, frames: idx.len(), dim: self.dim, data }
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let data = self.data.iter().map(|&x| T::from_f32(x)).collect();
        Tensor::from_vec(&[self.frames, self.dim], data).expect("shape checked at construction")
    }

    /// Values as one flat vector (rows concatenated).
    pub fn flat<T: Real>(&self) -> Vec<T> {
        self.data.iter().map(|&x| T::from_f32(x)).collect()
    }

    /// Rounds a rank-1 or rank-2 tensor to single precision.
    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Result<Self> {
        let data: Vec<f32> = t.data().iter().map(|x| x.as_f32()).collect();
        match t.shape() {
            [n] => Self::build(1, 1, *n, data),
            [r, c] => Self::build(2, *r, *c, data),
            s => Err(Error::Shape(format!("AFF1 supports rank 1 or 2, got {s:?}"))),
        }
    }
}

pub fn encode_aff1(seq: &FeatureSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + 8 + seq.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.push(seq.rank);
    if seq.rank == 2 {
        out.extend_from_slice(&(seq.frames as u32).to_le_bytes());
    }
    out.extend_from_slice(&(seq.dim as u32).to_le_bytes());
    for v in &seq.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_aff1(bytes: &[u8]) -> std::result::Result<FeatureSequence, TensorFileError> {
    if bytes.len() < 5 || &bytes[..4] != MAGIC {
        return Err(TensorFileError::BadMagic);
    }
    let rank = bytes[4];
    if rank != 1 && rank != 2 {
        return Err(TensorFileError::BadRank(rank));
    }
    let header = 5 + 4 * rank as usize;
    if bytes.len() < header {
        return Err(TensorFileError::Truncated { expected: header, found: bytes.len() });
    }
    let dims: Vec<u32> = bytes[5..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if dims.iter().any(|&d| d == 0) {
        return Err(TensorFileError::EmptyDim(dims));
    }
    let (frames, dim) = if rank == 1 { (1, dims[0] as usize) } else { (dims[0] as usize, dims[1] as usize) };
    let expected = frames * dim * 4;
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(TensorFileError::Truncated { expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(TensorFileError::Trailing(payload.len() - expected));
    }
    let mut data = Vec::with_capacity(frames * dim);
    for (i, c) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        if !v.is_finite() {
            return Err(TensorFileError::NonFinite(i));
        }
        data.push(v);
    }
    Ok(FeatureSequence { rank, frames, dim, data })
}

pub fn read_feature_tensor(path: &Path) -> Result<FeatureSequence> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_aff1(&bytes).map_err(|source| Error::TensorFile { path: path.to_path_buf(), source })
}

pub fn write_feature_tensor(path: &Path, seq: &FeatureSequence) -> Result<()> {
    fs::write(path, encode_aff1(seq)).map_err(|e| Error::io(path, e))
}
