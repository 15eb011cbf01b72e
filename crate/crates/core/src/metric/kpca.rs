use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::codebook::sq_dist;
use crate::error::{Error, Result};

const MIN_EIGENVALUE: f64 = 1e-10;

/// Gaussian-kernel PCA fitted on a reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelPcaModel {
    pub input_dim: usize,
    pub dim: usize,
    pub bandwidth: f64,
    /// `n x input_dim` reference vectors, row-major.
    pub reference: Vec<f64>,
    /// Retained eigenvalues of the centred kernel, descending.
    pub eigenvalues: Vec<f64>,
    /// `n x dim` eigenvectors scaled by `1 / sqrt(eigenvalue)`, row-major.
    pub coefficients: Vec<f64>,
    /// Column means of the training kernel matrix.
    pub kernel_col_means: Vec<f64>,
    pub kernel_mean: f64,
}

impl KernelPcaModel {
    pub fn reference_len(&self) -> usize {
        self.kernel_col_means.len()
    }

    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        gauss(a, b, self.bandwidth)
    }

    /// Projects `x` onto the retained components.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        let n = self.reference_len();
        let row: Vec<f64> = self.reference.chunks_exact(self.input_dim).map(|r| self.kernel(x, r)).collect();
        let row_mean = row.iter().sum::<f64>() / n as f64;
        let mut out = vec![0.0; self.dim];
        for (i, k) in row.iter().enumerate() {
            let centred = k - row_mean - self.kernel_col_means[i] + self.kernel_mean;
            let coef = &self.coefficients[i * self.dim..(i + 1) * self.dim];
            for (o, c) in out.iter_mut().zip(coef) {
                *o += centred * c;
            }
        }
        Ok(out)
    }
}

fn gauss(a: &[f64], b: &[f64], bandwidth: f64) -> f64 {
    (-sq_dist(a, b) / (2.0 * bandwidth * bandwidth)).exp()
}

/// Fits kernel PCA with `k(x, y) = exp(-|x - y|^2 / (2 bandwidth^2))`.
pub fn fit_kernel_pca(x: &[Vec<f64>], dim: usize, bandwidth: f64) -> Result<KernelPcaModel> {
    let n = x.len();
    if dim == 0 || n <= dim {
        return Err(Error::RankDeficient { positive: n.saturating_sub(1), requested: dim });
    }
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidArgument(format!("kernel bandwidth must be positive, got {bandwidth}")));
    }
    let input_dim = x[0].len();
    if let Some(bad) = x.iter().find(|v| v.len() != input_dim) {
        return Err(Error::DimensionMismatch { expected: input_dim, got: bad.len() });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("kernel PCA input contains non-finite values".into()));
    }

    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in 0..i {
            let v = gauss(&x[i], &x[j], bandwidth);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let col_means: Vec<f64> = (0..n).map(|j| k.column(j).sum() / n as f64).collect();
    let mean = col_means.iter().sum::<f64>() / n as f64;
    let mut kc = k;
    for i in 0..n {
        for j in 0..n {
            kc[(i, j)] += mean - col_means[i] - col_means[j];
        }
    }
    let eig = SymmetricEigen::new(kc);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let positive = order.iter().filter(|&&i| eig.eigenvalues[i] > MIN_EIGENVALUE).count();
    if positive < dim {
        return Err(Error::RankDeficient { positive, requested: dim });
    }
    let mut eigenvalues = Vec::with_capacity(dim);
    let mut coefficients = vec![0.0; n * dim];
    for (c, &idx) in order.iter().take(dim).enumerate() {
        let lambda = eig.eigenvalues[idx];
        eigenvalues.push(lambda);
        let v = eig.eigenvectors.column(idx);
        // fix the sign so the largest-magnitude entry is positive
        let pivot = (0..n).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a))).unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        let s = sign / lambda.sqrt();
        for i in 0..n {
            coefficients[i * dim + c] = v[i] * s;
        }
    }
    Ok(KernelPcaModel {
        input_dim,
        dim,
        bandwidth,
        reference: x.iter().flatten().copied().collect(),
        eigenvalues,
        coefficients,
        kernel_col_means: col_means,
        kernel_mean: mean,
    })
}
