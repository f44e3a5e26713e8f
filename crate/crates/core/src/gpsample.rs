//! Gaussian process realizations from a low-rank kernel factorization.
//!
//! Samples live in the weighted coordinates of [`crate::kernels`]: if
//! `Â = Û diag(σ̂) Ûᵀ` approximates the discretized covariance, a sample is
//! `Û diag(σ̂)^{1/2} z` with `z` standard normal, and its squared Euclidean
//! norm approximates the squared L² norm of the realization.

use crate::approx::{residual, LowRankFactorization};
use crate::bounds::validate::mean_stderr;
use crate::kernels::Grid;
use crate::linalg::{eig_sym, psd_sqrt, SpsdMatrix};
use crate::rng::normal_matrix;
use crate::{Error, Matrix, Result};

/// Relative tolerance on negative residual eigenvalues for the trace gap.
pub const RESIDUAL_PSD_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GpSampleBatch {
    /// Grid points × batch, weighted coordinates.
    pub samples: Matrix,
    pub rank_used: usize,
    pub seed: u64,
}

impl GpSampleBatch {
    /// Samples as function values at the grid points.
    pub fn grid_values(&self, grid: &Grid) -> Matrix {
        grid.to_grid_values(&self.samples)
    }
}

/// `batch` i.i.d. draws from `N(0, ÛΣ̂Ûᵀ)`.
pub fn sample_gp(f: &LowRankFactorization, batch: usize, seed: u64) -> Result<GpSampleBatch> {
    if batch == 0 {
        return Err(Error::InvalidArgument("batch must be at least 1".into()));
    }
    let z = normal_matrix(f.rank(), batch, seed, 0);
    Ok(GpSampleBatch { samples: f.sqrt_factor() * z, rank_used: f.rank(), seed })
}

/// `‖A − Â‖_Tr`, with a flag set when the residual was not PSD within
/// tolerance and the absolute eigenvalue sum had to be used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceGap {
    pub gap: f64,
    pub residual_psd: bool,
}

pub fn wasserstein_trace_check(a: &SpsdMatrix, f: &LowRankFactorization) -> Result<TraceGap> {
    let r = residual(a, f)?;
    let e = eig_sym(&r)?;
    let scale = a.op_norm()?.max(f64::MIN_POSITIVE);
    let lmin = e.values.last().copied().unwrap_or(0.0);
    if lmin >= -RESIDUAL_PSD_RTOL * scale {
        Ok(TraceGap { gap: (a.trace() - f.trace()).max(0.0), residual_psd: true })
    } else {
        Ok(TraceGap { gap: e.values.iter().map(|v| v.abs()).sum(), residual_psd: false })
    }
}

/// Mean and standard error of `‖ω − ω̂‖²` over `batch` coupled pairs
/// `ω = A^{1/2}g`, `ω̂ = Â^{1/2}g` sharing the same standard normal `g`.
pub fn coupled_mse(a: &SpsdMatrix, f: &LowRankFactorization, batch: usize, seed: u64) -> Result<(f64, f64)> {
    if batch == 0 {
        return Err(Error::InvalidArgument("batch must be at least 1".into()));
    }
    if f.dim() != a.dim() {
        return Err(Error::ShapeMismatch(format!("factorization has dimension {}, matrix {}", f.dim(), a.dim())));
    }
    let root_a = psd_sqrt(a)?.into_matrix();
    let sf = f.sqrt_factor();
    let diff = root_a - &sf * f.u_hat.transpose();
    let g = normal_matrix(a.dim(), batch, seed, 0);
    let d = diff * g;
    Ok(mean_stderr(d.column_iter().map(|c| c.norm_squared())))
}
