use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric PSD Mahalanobis metric, `d x d` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricModel {
    pub dim: usize,
    pub matrix: Vec<f64>,
}

impl MetricModel {
    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        MetricModel { dim, matrix }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let dim = m.nrows();
        MetricModel { dim, matrix: (0..dim * dim).map(|k| m[(k / dim, k % dim)]).collect() }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.matrix)
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        mahalanobis(self, a, b)
    }
}

/// `(a - b)^T M (a - b)`, clamped at zero.
pub fn mahalanobis(m: &MetricModel, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != m.dim || b.len() != m.dim {
        return Err(Error::DimensionMismatch {
            expected: m.dim,
            got: if a.len() != m.dim { a.len() } else { b.len() },
        });
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mut total = 0.0;
    for (i, di) in diff.iter().enumerate() {
        let row = &m.matrix[i * m.dim..(i + 1) * m.dim];
        total += di * row.iter().zip(&diff).map(|(r, d)| r * d).sum::<f64>();
    }
    Ok(total.max(0.0))
}

/// Projects a symmetric matrix onto the PSD cone by zeroing negative eigenvalues.
pub fn clip_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    (&out + out.transpose()) * 0.5
}

fn covariance(diffs: &[Vec<f64>], dim: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(dim, dim);
    for d in diffs {
        for i in 0..dim {
            let di = d[i];
            if di == 0.0 {
                continue;
            }
            for j in 0..=i {
                s[(i, j)] += di * d[j];
            }
        }
    }
    let n = diffs.len() as f64;
    for i in 0..dim {
        for j in 0..=i {
            let v = s[(i, j)] / n;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

fn inverse_spd(mut s: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = s.clone().cholesky() {
        return Ok(ch.inverse());
    }
    let d = s.nrows();
    let trace = s.trace();
    if !(trace > 0.0) {
        return Err(Error::SingularCovariance);
    }
    let jitter = 1e-6 * trace / d as f64;
    for i in 0..d {
        s[(i, i)] += jitter;
    }
    s.cholesky().map(|c| c.inverse()).ok_or(Error::SingularCovariance)
}

/// KISSME from explicit pairwise differences: `M = clip(S_pos^-1 - S_neg^-1)`,
/// where `S_*` are the zero-mean covariances of the differences.
pub fn fit_kissme_from_diffs(dim: usize, positive: &[Vec<f64>], negative: &[Vec<f64>]) -> Result<MetricModel> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::NoValidPairs("KISSME needs positive and negative pairs".into()));
    }
    if let Some(bad) = positive.iter().chain(negative).find(|d| d.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }
    let pos_inv = inverse_spd(covariance(positive, dim))?;
    let neg_inv = inverse_spd(covariance(negative, dim))?;
    Ok(MetricModel::from_matrix(&clip_psd(&(pos_inv - neg_inv))))
}

/// KISSME over index pairs into `features`.
pub fn fit_kissme(
    features: &[Vec<f64>],
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> Result<MetricModel> {
    let dim = features.first().map(Vec::len).ok_or_else(|| Error::NoValidPairs("no features".into()))?;
    let diffs = |pairs: &[(usize, usize)]| -> Vec<Vec<f64>> {
        pairs.iter().map(|&(i, j)| features[i].iter().zip(&features[j]).map(|(a, b)| a - b).collect()).collect()
    };
    fit_kissme_from_diffs(dim, &diffs(positives), &diffs(negatives))
}
