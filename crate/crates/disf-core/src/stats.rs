//! Standardization, covariance, and the decorrelation proxy.
//!
//! The scoring pipeline is: z-score features per dimension, form the
//! covariance `C = (1/(n-1)) sum_i z_i^T z_i`, and value a subset as
//! `exp(-||C||_F)`. A more uniform covariance spectrum means a smaller
//! Frobenius norm and a larger value, so maximizing the proxy steers the
//! selection away from collapsed (low-rank) feature subspaces.
//!
//! `GramAccumulator` keeps the running sum `S = sum z_i^T z_i` together with
//! a cached `||S||_F^2`, so scoring one more candidate costs O(d^2) via the
//! rank-one identity `||S + zz^T||_F^2 = ||S||_F^2 + 2 z^T S z + ||z||^4`
//! instead of rebuilding the matrix.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{dot, RowMatrix};

/// Dimensions with sample standard deviation at or below this are treated
/// as constant and zeroed rather than divided through.
pub const ZERO_VARIANCE_EPS: f64 = 1e-12;

/// Eigenvalues this close to zero are clamped to exactly zero; rank-deficient
/// Gram matrices are the common case whenever a subset is smaller than `d`.
pub const EIGEN_CLAMP: f64 = 1e-10;

/// Maximum entrywise asymmetry accepted by the eigensolver front door.
pub const SYMMETRY_TOL: f64 = 1e-6;

/// Per-dimension mean and sample standard deviation of a feature block.
#[derive(Debug, Clone)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub zero_variance_dims: Vec<usize>,
}

/// A block of z-scored rows plus the statistics that produced it.
#[derive(Debug, Clone)]
pub struct StandardizedBatch {
    z: RowMatrix,
    stats: FeatureStats,
}

impl StandardizedBatch {
    pub fn z(&self) -> &RowMatrix {
        &self.z
    }

    pub fn into_z(self) -> RowMatrix {
        self.z
    }

    pub fn mean(&self) -> &[f64] {
        &self.stats.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.stats.std
    }

    pub fn zero_variance_dims(&self) -> &[usize] {
        &self.stats.zero_variance_dims
    }
}

/// Mean and sample (n-1) standard deviation per dimension.
///
/// The Bessel denominator is load-bearing: together with the `1/(n-1)`
/// covariance scaling it pins `trace(C) = d` on a freshly standardized
/// block, which is what makes the spectrum-flatness identity
/// `sum_i (lambda_i - mean)^2 = ||C||_F^2 - d` hold exactly.
pub fn feature_stats(features: &RowMatrix) -> Result<FeatureStats> {
    let (n, d) = (features.rows(), features.cols());
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 rows to estimate variance, got {n}"
        )));
    }
    let mut mean = vec![0.0; d];
    for row in features.iter_rows() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for row in features.iter_rows() {
        for ((v, &m), &x) in var.iter_mut().zip(&mean).zip(row) {
            let c = x - m;
            *v += c * c;
        }
    }
    let mut std = vec![0.0; d];
    let mut zero_variance_dims = Vec::new();
    for (j, v) in var.iter().enumerate() {
        let s = (v / (n as f64 - 1.0)).sqrt();
        if s <= ZERO_VARIANCE_EPS {
            zero_variance_dims.push(j);
            std[j] = 0.0;
        } else {
            std[j] = s;
        }
    }
    Ok(FeatureStats {
        mean,
        std,
        zero_variance_dims,
    })
}

/// Apply fixed statistics to a feature block; constant dimensions map to 0.
pub fn standardize_with(features: &RowMatrix, stats: &FeatureStats) -> StandardizedBatch {
    let (n, d) = (features.rows(), features.cols());
    let mut z = RowMatrix::zeros(n, d);
    for i in 0..n {
        let src = features.row(i);
        let dst = z.row_mut(i);
        for j in 0..d {
            if stats.std[j] > 0.0 {
                dst[j] = (src[j] - stats.mean[j]) / stats.std[j];
            }
        }
    }
    StandardizedBatch {
        z,
        stats: stats.clone(),
    }
}

/// Z-score a block against its own per-dimension statistics.
pub fn standardize_batch(features: &RowMatrix) -> Result<StandardizedBatch> {
    let stats = feature_stats(features)?;
    Ok(standardize_with(features, &stats))
}

/// Symmetric `d x d` covariance with its sample count.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    data: Vec<f64>,
    dim: usize,
    sample_count: usize,
}

impl CovarianceMatrix {
    /// Wrap an existing symmetric matrix (diagnostics feed spectra directly).
    pub fn from_raw(data: Vec<f64>, dim: usize, sample_count: usize) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::InvalidArgument(format!(
                "{} entries cannot form a {dim}x{dim} matrix",
                data.len()
            )));
        }
        Ok(CovarianceMatrix {
            data,
            dim,
            sample_count,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }
}

/// `C = (1/(m-1)) sum_i z_i^T z_i` over the given rows.
pub fn covariance(z: &RowMatrix) -> Result<CovarianceMatrix> {
    let (m, d) = (z.rows(), z.cols());
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "covariance needs at least 2 rows, got {m}"
        )));
    }
    let mut data = accumulate_gram(z);
    let scale = 1.0 / (m as f64 - 1.0);
    for v in &mut data {
        *v *= scale;
    }
    Ok(CovarianceMatrix {
        data,
        dim: d,
        sample_count: m,
    })
}

fn accumulate_gram(z: &RowMatrix) -> Vec<f64> {
    let d = z.cols();
    let mut s = vec![0.0; d * d];
    for row in z.iter_rows() {
        add_outer_product(&mut s, row);
    }
    s
}

/// `s += z z^T`, writing both triangles.
fn add_outer_product(s: &mut [f64], z: &[f64]) {
    let d = z.len();
    for (i, &zi) in z.iter().enumerate() {
        let out = &mut s[i * d..(i + 1) * d];
        for (o, &zj) in out.iter_mut().zip(z) {
            *o += zi * zj;
        }
    }
}

/// Root of the sum of squared entries.
pub fn frobenius_norm(entries: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    for &v in entries {
        if !v.is_finite() {
            return Err(Error::Validation(
                "non-finite entry in Frobenius norm input".into(),
            ));
        }
        sum += v * v;
    }
    Ok(sum.sqrt())
}

/// Subset value `exp(-||C||_F)`; larger is flatter (more decorrelated).
pub fn proxy_value(z: &RowMatrix) -> Result<f64> {
    let c = covariance(z)?;
    Ok((-frobenius_norm(c.as_slice())?).exp())
}

/// Running Gram sum `S = sum z_i^T z_i` with a cached `||S||_F^2`.
#[derive(Debug, Clone)]
pub struct GramAccumulator {
    s: Vec<f64>,
    dim: usize,
    count: usize,
    frob_sq: f64,
}

impl GramAccumulator {
    pub fn new(dim: usize) -> Self {
        GramAccumulator {
            s: vec![0.0; dim * dim],
            dim,
            count: 0,
            frob_sq: 0.0,
        }
    }

    /// Accumulator holding every row of `z`.
    pub fn from_rows(z: &RowMatrix) -> Self {
        let mut acc = GramAccumulator::new(z.cols());
        for row in z.iter_rows() {
            acc.insert(row).expect("rows share the accumulator dimension");
        }
        acc
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn frob_sq(&self) -> f64 {
        self.frob_sq
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "vector of length {} fed to a dimension-{} accumulator",
                z.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `z^T S z + ||z||^4` evaluated against the current sum; adding it
    /// twice to `||S||_F^2` minus `||z||^4` gives the post-insert norm.
    fn quad_terms(&self, z: &[f64]) -> (f64, f64) {
        let d = self.dim;
        let mut quad = 0.0;
        for (i, &zi) in z.iter().enumerate() {
            quad += zi * dot(&self.s[i * d..(i + 1) * d], z);
        }
        let norm_sq = dot(z, z);
        (quad, norm_sq * norm_sq)
    }

    /// Add one row: `S += z z^T` with the cached norm updated in O(d^2).
    pub fn insert(&mut self, z: &[f64]) -> Result<()> {
        self.check_dim(z)?;
        let (quad, norm4) = self.quad_terms(z);
        self.frob_sq += 2.0 * quad + norm4;
        add_outer_product(&mut self.s, z);
        self.count += 1;
        Ok(())
    }

    /// Value the union `U + {z}` without mutating the accumulator.
    ///
    /// Uses the `1/((|U|+1)-1)` covariance scaling, so for a non-empty
    /// accumulator this equals `proxy_value` on the explicit union.
    pub fn gain(&self, z: &[f64]) -> Result<f64> {
        self.check_dim(z)?;
        let (quad, norm4) = self.quad_terms(z);
        let union_frob_sq = self.frob_sq + 2.0 * quad + norm4;
        let denom = self.count.max(1) as f64;
        Ok((-union_frob_sq.sqrt() / denom).exp())
    }

    /// Value of the accumulated set itself.
    ///
    /// Singletons fall back to a denominator of 1 (`exp(-||zz^T||_F)`), so a
    /// selection trace is well defined from the very first pick.
    pub fn proxy_value(&self) -> f64 {
        let denom = (self.count.saturating_sub(1)).max(1) as f64;
        (-self.frob_sq.sqrt() / denom).exp()
    }

    /// `||S||_F^2` recomputed from the dense matrix, bypassing the cache.
    pub fn dense_frob_sq(&self) -> f64 {
        dot(&self.s, &self.s)
    }

    /// Deliberately skew the cached norm. Exists only so fault-injection
    /// tests can prove the cache/dense cross-check actually fires.
    #[doc(hidden)]
    pub fn corrupt_cached_norm(&mut self, delta: f64) {
        self.frob_sq += delta;
    }
}

/// Eigenvalues of a symmetric matrix, descending, with near-zeros clamped.
pub fn eigen_spectrum(c: &CovarianceMatrix) -> Result<Vec<f64>> {
    let d = c.dim();
    let data = c.as_slice();
    for i in 0..d {
        for j in (i + 1)..d {
            let gap = (data[i * d + j] - data[j * d + i]).abs();
            if gap > SYMMETRY_TOL {
                return Err(Error::Validation(format!(
                    "matrix asymmetric at ({i},{j}): gap {gap:.3e}"
                )));
            }
        }
    }
    let m = DMatrix::from_row_slice(d, d, data);
    let mut eigenvalues: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    for v in &mut eigenvalues {
        if v.abs() < EIGEN_CLAMP {
            *v = 0.0;
        }
    }
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    Ok(eigenvalues)
}
