//! Dense-matrix primitives: norms, Gram-Schmidt orthonormalization, SVD,
//! and the two proximal operators (soft threshold and singular value
//! thresholding) that every solver update is built from.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("rank deficient input: column {col} pivot {pivot:e} below tolerance")]
    RankDeficient { col: usize, pivot: f64 },
    #[error("SVD iteration failed to converge")]
    ConvergenceFailure,
}

/// Row-major dense matrix of `f64`. The single carrier type for all
/// observations, factors, masks and multipliers in this crate.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![1.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds from a row-major buffer. Panics if the length is wrong;
    /// use [`DenseMatrix::from_vec_checked`] on untrusted input.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "buffer length {} does not match {rows}x{cols}",
            data.len()
        );
        DenseMatrix { rows, cols, data }
    }

    /// Validating constructor for I/O paths: rejects NaN and infinities.
    pub fn from_vec_checked(
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    ) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::ShapeMismatch {
                expected: format!("{rows}x{cols}"),
                got: format!("buffer of {}", data.len()),
            });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite {
                row: k / cols.max(1),
                col: k % cols.max(1),
            });
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[f64]) {
        assert_eq!(v.len(), self.rows);
        for i in 0..self.rows {
            self[(i, j)] = v[i];
        }
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Matrix product `self * rhs`. Panics on inner-dimension mismatch.
    pub fn dot(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul dimension mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let lhs_row = &self.data[i * self.cols..(i + 1) * self.cols];
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in lhs_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &DenseMatrix) -> DenseMatrix {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &DenseMatrix) -> DenseMatrix {
        self.zip_with(rhs, |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, rhs: &DenseMatrix) -> DenseMatrix {
        self.zip_with(rhs, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> DenseMatrix {
        self.map(|v| c * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, rhs: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> DenseMatrix {
        assert_eq!(self.shape(), rhs.shape(), "elementwise shape mismatch");
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn count(&self, pred: impl Fn(f64) -> bool) -> usize {
        self.data.iter().filter(|&&v| pred(v)).count()
    }

    /// Largest singular value, via a values-only SVD.
    pub fn spectral_norm(&self) -> Result<f64, NumericsError> {
        Ok(singular_values(self)?.first().copied().unwrap_or(0.0))
    }

    /// Numerical rank with the crate-wide cutoff sigma_i >= 1e-10 * sigma_1.
    pub fn rank(&self) -> Result<usize, NumericsError> {
        let sv = singular_values(self)?;
        let top = sv.first().copied().unwrap_or(0.0);
        if top == 0.0 {
            return Ok(0);
        }
        Ok(sv.iter().filter(|&&s| s >= RANK_CUTOFF * top).count())
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Singular values below `RANK_CUTOFF * sigma_1` count as zero when ranks
/// are reported.
pub const RANK_CUTOFF: f64 = 1e-10;

/// A = left * diag(singular_values) * right^T with orthonormal factors and
/// non-increasing singular values.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub left: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub right: DenseMatrix,
}

impl SvdFactors {
    pub fn recompose(&self) -> DenseMatrix {
        let k = self.singular_values.len();
        let mut scaled = self.left.clone();
        for j in 0..k {
            for i in 0..scaled.rows() {
                scaled[(i, j)] *= self.singular_values[j];
            }
        }
        scaled.dot(&self.right.transpose())
    }

    pub fn rank(&self) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        if top == 0.0 {
            return 0;
        }
        self.singular_values
            .iter()
            .filter(|&&s| s >= RANK_CUTOFF * top)
            .count()
    }
}

const SVD_MAX_SWEEPS: usize = 1000;

/// Relative tolerance for validating SVD output. The bidiagonalization
/// backend can silently return invalid factors on exactly rank-deficient
/// inputs (e.g. repeated columns), so every result is checked and bad ones
/// are recomputed through the Gram-matrix eigendecomposition.
const SVD_VALIDATE_TOL: f64 = 1e-9;

/// Full SVD. Factors are deterministic for a fixed input: singular values
/// are sorted non-increasing and each left singular vector has a
/// non-negative first nonzero entry.
pub fn svd(a: &DenseMatrix) -> Result<SvdFactors, NumericsError> {
    let na = a.to_nalgebra();
    if let Some(svd) = na.try_svd(true, true, f64::EPSILON, SVD_MAX_SWEEPS) {
        let u = svd.u.as_ref().expect("u requested");
        let vt = svd.v_t.as_ref().expect("v_t requested");
        let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        let factors = sort_and_sign(a, u, vt, &sv);
        if factors.recompose().sub(a).fro_norm() <= SVD_VALIDATE_TOL * (1.0 + a.fro_norm()) {
            return Ok(factors);
        }
    }
    svd_via_gram(a)
}

/// Sorts singular triplets non-increasing and fixes the sign convention
/// (first nonzero entry of each left vector non-negative).
fn sort_and_sign(a: &DenseMatrix, u: &DMatrix<f64>, vt: &DMatrix<f64>, sv: &[f64]) -> SvdFactors {
    let k = sv.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap());

    let mut left = DenseMatrix::zeros(a.rows(), k);
    let mut right = DenseMatrix::zeros(a.cols(), k);
    let mut values = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        values.push(sv[src]);
        // Flip the pair so the first nonzero entry of the left vector is
        // non-negative.
        let mut sign = 1.0;
        for i in 0..a.rows() {
            let v = u[(i, src)];
            if v != 0.0 {
                if v < 0.0 {
                    sign = -1.0;
                }
                break;
            }
        }
        for i in 0..a.rows() {
            left[(i, dst)] = sign * u[(i, src)];
        }
        for j in 0..a.cols() {
            right[(j, dst)] = sign * vt[(src, j)];
        }
    }
    SvdFactors {
        left,
        singular_values: values,
        right,
    }
}

/// Robust SVD via the symmetric eigendecomposition of the Gram matrix on
/// the smaller side. Slower but immune to the bidiagonalization failure on
/// rank-deficient inputs; zero-sigma directions on the larger side are
/// completed with an orthonormalized standard basis.
fn svd_via_gram(a: &DenseMatrix) -> Result<SvdFactors, NumericsError> {
    let (rows, cols) = a.shape();
    let work = if rows >= cols { a.clone() } else { a.transpose() };
    let (n, k) = work.shape();
    let nw = work.to_nalgebra();
    let gram = nw.transpose() * &nw;
    let eig = nalgebra::SymmetricEigen::new(gram);

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());

    // Small side: eigenvectors of the Gram. Large side: work * v / sigma,
    // with sigma recomputed as ||work v|| for accuracy.
    let mut small = DenseMatrix::zeros(k, k);
    let mut large = DenseMatrix::zeros(n, k);
    let mut values = vec![0.0; k];
    let top_sigma = eig.eigenvalues[order[0]].max(0.0).sqrt();
    for (dst, &src) in order.iter().enumerate() {
        for j in 0..k {
            small[(j, dst)] = eig.eigenvectors[(j, src)];
        }
        let mut w = vec![0.0; n];
        for i in 0..n {
            w[i] = (0..k).map(|j| work[(i, j)] * small[(j, dst)]).sum();
        }
        let norm: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > RANK_CUTOFF * top_sigma {
            values[dst] = norm;
            for i in 0..n {
                large[(i, dst)] = w[i] / norm;
            }
        }
    }
    // Fill zero-sigma columns of the large factor so it stays orthonormal.
    for dst in 0..k {
        if values[dst] > 0.0 {
            continue;
        }
        let mut filled = false;
        for cand in 0..n {
            let mut w = vec![0.0; n];
            w[cand] = 1.0;
            for _ in 0..2 {
                for other in 0..k {
                    // Skip this slot and later zero-sigma slots that have
                    // not been filled yet.
                    if other == dst || (values[other] == 0.0 && other > dst) {
                        continue;
                    }
                    let proj: f64 = (0..n).map(|i| large[(i, other)] * w[i]).sum();
                    for i in 0..n {
                        w[i] -= proj * large[(i, other)];
                    }
                }
            }
            let norm: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.5 {
                for i in 0..n {
                    large[(i, dst)] = w[i] / norm;
                }
                filled = true;
                break;
            }
        }
        if !filled {
            return Err(NumericsError::ConvergenceFailure);
        }
    }

    let (u, v) = if rows >= cols {
        (large, small)
    } else {
        (small, large)
    };
    let factors = sort_and_sign(a, &u.to_nalgebra(), &v.transpose().to_nalgebra(), &values);
    if factors.recompose().sub(a).fro_norm() > SVD_VALIDATE_TOL * (1.0 + a.fro_norm()) {
        return Err(NumericsError::ConvergenceFailure);
    }
    Ok(factors)
}

/// Singular values only (sorted non-increasing). Validated against the
/// invariant sum(sigma_i^2) = ||A||_F^2, with the Gram-matrix fallback on
/// failure (see `svd`).
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>, NumericsError> {
    let na = a.to_nalgebra();
    if let Some(svd) = na.try_svd(false, false, f64::EPSILON, SVD_MAX_SWEEPS) {
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let fro2 = a.as_slice().iter().map(|v| v * v).sum::<f64>();
        let sum2: f64 = sv.iter().map(|s| s * s).sum();
        if (sum2 - fro2).abs() <= 1e-8 * (1.0 + fro2) {
            return Ok(sv);
        }
    }
    Ok(svd_via_gram(a)?.singular_values)
}

/// Gram-Schmidt orthonormalization. Returns Q with the same column span,
/// Q^T Q = I. Errors out instead of dropping rank-deficient columns.
pub fn orthonormalize(m: &DenseMatrix) -> Result<DenseMatrix, NumericsError> {
    let (n, c) = m.shape();
    let max_col_norm = (0..c)
        .map(|j| {
            (0..n)
                .map(|i| m[(i, j)] * m[(i, j)])
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0f64, f64::max);
    let tol = 1e-12 * max_col_norm;

    let mut q = m.clone();
    for j in 0..c {
        // Modified Gram-Schmidt with one re-orthogonalization pass.
        for _ in 0..2 {
            for p in 0..j {
                let proj: f64 = (0..n).map(|i| q[(i, p)] * q[(i, j)]).sum();
                for i in 0..n {
                    q[(i, j)] -= proj * q[(i, p)];
                }
            }
        }
        let norm: f64 = (0..n).map(|i| q[(i, j)] * q[(i, j)]).sum::<f64>().sqrt();
        if norm <= tol {
            return Err(NumericsError::RankDeficient {
                col: j,
                pivot: norm,
            });
        }
        for i in 0..n {
            q[(i, j)] /= norm;
        }
    }
    Ok(q)
}

/// Elementwise soft threshold sgn(a) * max(|a| - tau, 0), with sgn(0) = 0.
pub fn shrink(a: &DenseMatrix, tau: f64) -> DenseMatrix {
    debug_assert!(tau >= 0.0);
    a.map(|v| shrink_scalar(v, tau))
}

pub fn shrink_scalar(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// Singular value thresholding: soft threshold applied to the spectrum.
pub fn svt(a: &DenseMatrix, tau: f64) -> Result<DenseMatrix, NumericsError> {
    debug_assert!(tau >= 0.0);
    let mut f = svd(a)?;
    for s in &mut f.singular_values {
        *s = shrink_scalar(*s, tau);
    }
    Ok(f.recompose())
}

/// The four norms used throughout: Frobenius, entrywise l1, nuclear
/// (sum of singular values) and spectral (largest singular value).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub fro: f64,
    pub l1: f64,
    pub nuclear: f64,
    pub spectral: f64,
}

pub fn norms(a: &DenseMatrix) -> Result<Norms, NumericsError> {
    let sv = singular_values(a)?;
    Ok(Norms {
        fro: a.fro_norm(),
        l1: a.l1_norm(),
        nuclear: sv.iter().sum(),
        spectral: sv.first().copied().unwrap_or(0.0),
    })
}
