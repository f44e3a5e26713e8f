//! Correlated Gaussian sketches.
//!
//! Columns of a sketch are i.i.d. `N(0, K)`. Expressed in the eigenbasis `U`
//! of the target matrix, the covariance `K̃ = UᵀKU` splits into blocks
//! `K̃₁₁ (k×k)`, `K̃₂₁ ((n−k)×k)`, `K̃₂₂`, and the Schur complement
//! `K̃₂₂.₁ = K̃₂₂ − K̃₂₁K̃₁₁⁻¹K̃₂₁ᵀ`, which is the covariance of the trailing
//! sketch component conditioned on the leading one.

use nalgebra::Cholesky;

use crate::linalg::{psd_sqrt, symmetrize, EigenDecomposition, SpsdMatrix};
use crate::rng::normal_matrix;
use crate::{Error, Matrix, Result};

/// Relative threshold on `λ_min(K̃₁₁)/‖K̃₁₁‖₂` below which K̃₁₁ counts as singular.
pub const K11_SINGULAR_RTOL: f64 = 1e-12;

/// Sketch covariance `K` with a cached square root.
///
/// The square root keeps only eigenpairs above `n·eps·λ_max`; eigenvalues at
/// the round-off floor would otherwise inject noise directions of relative
/// size `sqrt(eps)` into every draw. `rank_estimate` is the number kept.
#[derive(Debug, Clone)]
pub struct CovarianceSpec {
    k: SpsdMatrix,
    sqrt_k: Matrix,
    rank_estimate: usize,
}

impl CovarianceSpec {
    pub fn new(k: SpsdMatrix) -> Result<Self> {
        k.check_psd()?;
        let n = k.dim();
        let e = k.eig()?;
        let lmax = e.values.first().copied().unwrap_or(0.0).max(0.0);
        let cutoff = n as f64 * f64::EPSILON * lmax;
        let rank_estimate = e.values.iter().take_while(|&&v| v > cutoff && v > 0.0).count();
        let mut sqrt_k = Matrix::zeros(n, n);
        for i in 0..rank_estimate {
            let v = e.vectors.column(i);
            sqrt_k += (v * v.transpose()) * e.values[i].sqrt();
        }
        Ok(CovarianceSpec { k, sqrt_k: symmetrize(&sqrt_k), rank_estimate })
    }

    pub fn identity(n: usize) -> Self {
        CovarianceSpec {
            k: SpsdMatrix::identity(n),
            sqrt_k: Matrix::identity(n, n),
            rank_estimate: n,
        }
    }

    pub fn dim(&self) -> usize {
        self.k.dim()
    }

    pub fn covariance(&self) -> &SpsdMatrix {
        &self.k
    }

    pub fn sqrt(&self) -> &Matrix {
        &self.sqrt_k
    }

    pub fn rank_estimate(&self) -> usize {
        self.rank_estimate
    }

    /// Covariance `c·K`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        CovarianceSpec::new(SpsdMatrix::new_unverified(self.k.matrix() * c)?)
    }
}

/// `n × cols` sketch `Ω = sqrt(K)·X`, `X` standard normal from `(seed, 0)`.
pub fn draw_sketch(cov: &CovarianceSpec, cols: usize, seed: u64) -> Matrix {
    draw_sketch_stream(cov, cols, seed, 0)
}

/// As [`draw_sketch`] with an explicit stream; trial `i` of a Monte Carlo
/// loop uses stream `i`.
pub fn draw_sketch_stream(cov: &CovarianceSpec, cols: usize, seed: u64, stream: u64) -> Matrix {
    let x = normal_matrix(cov.dim(), cols, seed, stream);
    cov.sqrt() * x
}

/// Blocks of `K̃ = UᵀKU` split at rank `k`.
#[derive(Debug, Clone)]
pub struct PartitionedCovariance {
    pub k: usize,
    pub k11: Matrix,
    pub k21: Matrix,
    pub k22: Matrix,
    /// Schur complement, symmetrized and eigenvalue-clamped at zero.
    pub k22_1: Matrix,
    /// `‖K̃₁₁⁻¹‖₂ = 1/λ_min(K̃₁₁)`.
    pub inv_k11_opnorm: f64,
    /// `K̃₁₁⁻¹K̃₂₁ᵀ` (k × (n−k)), from a Cholesky solve.
    pub k11_inv_k21t: Matrix,
}

impl PartitionedCovariance {
    pub fn dim(&self) -> usize {
        self.k + self.k22.nrows()
    }

    /// Reassembled `[K̃₁₁ K̃₂₁ᵀ; K̃₂₁ K̃₂₂]`.
    pub fn reassemble(&self) -> Matrix {
        let (n, k) = (self.dim(), self.k);
        let mut out = Matrix::zeros(n, n);
        out.view_mut((0, 0), (k, k)).copy_from(&self.k11);
        out.view_mut((k, 0), (n - k, k)).copy_from(&self.k21);
        out.view_mut((0, k), (k, n - k)).copy_from(&self.k21.transpose());
        out.view_mut((k, k), (n - k, n - k)).copy_from(&self.k22);
        out
    }

    /// `K̃₁₁⁻¹`.
    pub fn k11_inverse(&self) -> Matrix {
        let chol = Cholesky::new(self.k11.clone()).expect("K11 verified positive definite");
        symmetrize(&chol.inverse())
    }
}

/// Rotates `K` into the eigenbasis of `A` and splits it at rank `k`.
pub fn partition_covariance(
    cov: &CovarianceSpec,
    eig_a: &EigenDecomposition,
    k: usize,
) -> Result<PartitionedCovariance> {
    let n = cov.dim();
    if eig_a.dim() != n {
        return Err(Error::ShapeMismatch(format!(
            "covariance is {n}x{n}, eigenbasis has dimension {}",
            eig_a.dim()
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("need 1 <= k < n, got k={k}, n={n}")));
    }
    let u = &eig_a.vectors;
    let kt = symmetrize(&(u.transpose() * cov.covariance().matrix() * u));
    partition_rotated(&kt, k)
}

/// Splits an already rotated covariance `K̃`.
pub fn partition_rotated(kt: &Matrix, k: usize) -> Result<PartitionedCovariance> {
    let n = kt.nrows();
    let m = n - k;
    let k11 = kt.view((0, 0), (k, k)).into_owned();
    let k21 = kt.view((k, 0), (m, k)).into_owned();
    let k22 = kt.view((k, k), (m, m)).into_owned();

    let k11_eig = crate::linalg::eig_sym(&k11)?;
    let top = k11_eig.values[0];
    let min = k11_eig.values[k - 1];
    let threshold = K11_SINGULAR_RTOL * top;
    if !(top > 0.0 && min > threshold) {
        return Err(Error::SingularK11 { min_eig: min, threshold });
    }
    let chol = Cholesky::new(k11.clone()).ok_or(Error::SingularK11 { min_eig: min, threshold })?;
    let k11_inv_k21t = chol.solve(&k21.transpose());

    let schur = symmetrize(&(&k22 - &k21 * &k11_inv_k21t));
    let k22_1 = if m == 0 {
        schur
    } else {
        let e = crate::linalg::eig_sym(&schur)?;
        let clamped: Vec<f64> = e.values.iter().map(|v| v.max(0.0)).collect();
        SpsdMatrix::from_eigen(clamped, e.vectors)?.into_matrix()
    };

    Ok(PartitionedCovariance {
        k,
        k11,
        k21,
        k22,
        k22_1,
        inv_k11_opnorm: 1.0 / min,
        k11_inv_k21t,
    })
}

/// A sketch together with its coordinates in the eigenbasis of `A`.
#[derive(Debug, Clone)]
pub struct SketchDraw {
    pub omega: Matrix,
    /// `U₁ᵀΩ`, k × cols.
    pub omega1: Matrix,
    /// `U₂ᵀΩ`, (n−k) × cols.
    pub omega2: Matrix,
    pub seed: u64,
}

impl SketchDraw {
    pub fn split(omega: Matrix, eig_a: &EigenDecomposition, k: usize, seed: u64) -> Self {
        let rotated = eig_a.vectors.transpose() * &omega;
        let c = omega.ncols();
        let omega1 = rotated.view((0, 0), (k, c)).into_owned();
        let omega2 = rotated.view((k, 0), (rotated.nrows() - k, c)).into_owned();
        SketchDraw { omega, omega1, omega2, seed }
    }
}

/// Mean `K̃₂₁K̃₁₁⁻¹Ω₁` and covariance square root `K̃₂₂.₁^{1/2}` of `Ω₂ | Ω₁`.
pub fn conditional_draw_params(
    pc: &PartitionedCovariance,
    omega1: &Matrix,
) -> Result<(Matrix, Matrix)> {
    if omega1.nrows() != pc.k {
        return Err(Error::ShapeMismatch(format!(
            "Omega1 has {} rows, expected k = {}",
            omega1.nrows(),
            pc.k
        )));
    }
    let mean = pc.k11_inv_k21t.transpose() * omega1;
    let cov_sqrt = psd_sqrt(&SpsdMatrix::new_unverified(pc.k22_1.clone())?)?.into_matrix();
    Ok((mean, cov_sqrt))
}
