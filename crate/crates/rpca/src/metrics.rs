//! Recovery and image-quality metrics: Frobenius relative error, PSNR and
//! the standard Gaussian-windowed SSIM.

use crate::numerics::DenseMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("reference matrix has zero Frobenius norm")]
    ZeroReference,
    #[error("matrix {rows}x{cols} smaller than the {window}x{window} SSIM window")]
    TooSmall {
        rows: usize,
        cols: usize,
        window: usize,
    },
}

fn check_shapes(a: &DenseMatrix, b: &DenseMatrix) -> Result<(), MetricsError> {
    if a.shape() != b.shape() {
        return Err(MetricsError::ShapeMismatch(
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols(),
        ));
    }
    Ok(())
}

/// ||L - L0||_F / ||L0||_F.
pub fn rel_error(l: &DenseMatrix, l0: &DenseMatrix) -> Result<f64, MetricsError> {
    check_shapes(l, l0)?;
    let denom = l0.fro_norm();
    if denom == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    Ok(l.sub(l0).fro_norm() / denom)
}

/// 10 log10(peak^2 / MSE) in dB; +inf when the inputs are identical.
pub fn psnr(a: &DenseMatrix, b: &DenseMatrix, peak: f64) -> Result<f64, MetricsError> {
    check_shapes(a, b)?;
    let n = (a.rows() * a.cols()) as f64;
    let mse = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Parameters of the standard SSIM: 11x11 Gaussian window with sigma 1.5
/// and stabilization constants K1 = 0.01, K2 = 0.03.
#[derive(Clone, Copy, Debug)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

/// Mean local SSIM over Gaussian-weighted windows (valid positions only).
pub fn ssim(
    a: &DenseMatrix,
    b: &DenseMatrix,
    params: &SsimParams,
    dynamic_range: f64,
) -> Result<f64, MetricsError> {
    check_shapes(a, b)?;
    let (rows, cols) = a.shape();
    let w = params.window;
    if rows < w || cols < w {
        return Err(MetricsError::TooSmall {
            rows,
            cols,
            window: w,
        });
    }

    // Normalized 2-D Gaussian kernel.
    let half = (w - 1) as f64 / 2.0;
    let mut kernel = vec![0.0; w * w];
    let mut ksum = 0.0;
    for i in 0..w {
        for j in 0..w {
            let di = i as f64 - half;
            let dj = j as f64 - half;
            let g = (-(di * di + dj * dj) / (2.0 * params.sigma * params.sigma)).exp();
            kernel[i * w + j] = g;
            ksum += g;
        }
    }
    for k in &mut kernel {
        *k /= ksum;
    }

    let c1 = (params.k1 * dynamic_range).powi(2);
    let c2 = (params.k2 * dynamic_range).powi(2);

    let mut total = 0.0;
    let mut count = 0usize;
    for top in 0..=(rows - w) {
        for left in 0..=(cols - w) {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            let mut aa = 0.0;
            let mut bb = 0.0;
            let mut ab = 0.0;
            for i in 0..w {
                for j in 0..w {
                    let k = kernel[i * w + j];
                    let x = a[(top + i, left + j)];
                    let y = b[(top + i, left + j)];
                    mu_a += k * x;
                    mu_b += k * y;
                    aa += k * x * x;
                    bb += k * y * y;
                    ab += k * x * y;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}
