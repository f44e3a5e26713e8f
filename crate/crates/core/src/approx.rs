//! Nyström approximation and randomized SVD.
//!
//! Every approximation is returned as `Â = Û diag(σ̂) Ûᵀ` with orthonormal
//! columns in `Û` and `σ̂` sorted in descending order.

use crate::linalg::{
    chol_spd, eig_sym, orth, schatten_norm, sym_norm, symmetrize, JitterPolicy, NormTriple,
    SchattenNorm, SpsdMatrix, ORTH_RTOL, PINV_RTOL,
};
use crate::{Error, Matrix, Result};

/// Default relative shift for [`nystrom_stabilized`].
pub const DEFAULT_SHIFT_EPS: f64 = f64::EPSILON;

/// Anything that can be applied to a block of vectors: a dense matrix or a
/// matrix-free kernel operator.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &Matrix) -> Matrix;
}

impl LinearOperator for Matrix {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &Matrix) -> Matrix {
        self * x
    }
}

impl LinearOperator for SpsdMatrix {
    fn dim(&self) -> usize {
        SpsdMatrix::dim(self)
    }
    fn apply(&self, x: &Matrix) -> Matrix {
        self.matrix() * x
    }
}

/// `Â = Û diag(σ̂) Ûᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactorization {
    pub u_hat: Matrix,
    pub sigma_hat: Vec<f64>,
    /// Shift used by the stabilized algorithm, zero otherwise.
    pub shift_nu: f64,
}

impl LowRankFactorization {
    pub fn zero(n: usize) -> Self {
        LowRankFactorization { u_hat: Matrix::zeros(n, 0), sigma_hat: Vec::new(), shift_nu: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.u_hat.nrows()
    }

    pub fn rank(&self) -> usize {
        self.sigma_hat.len()
    }

    pub fn trace(&self) -> f64 {
        self.sigma_hat.iter().sum()
    }

    pub fn to_dense(&self) -> Matrix {
        let mut scaled = self.u_hat.clone();
        for (j, &s) in self.sigma_hat.iter().enumerate() {
            scaled.column_mut(j).scale_mut(s);
        }
        symmetrize(&(scaled * self.u_hat.transpose()))
    }

    /// `Û diag(σ̂)^{1/2}`, so that `Â = FFᵀ`.
    pub fn sqrt_factor(&self) -> Matrix {
        let mut f = self.u_hat.clone();
        for (j, &s) in self.sigma_hat.iter().enumerate() {
            f.column_mut(j).scale_mut(s.max(0.0).sqrt());
        }
        f
    }

    /// Builds a factorization from a thin SVD `U S Vᵀ` of a factor `B`
    /// (`Â = BBᵀ`), subtracting `shift` from the squared singular values.
    fn from_factor(b: &Matrix, shift: f64) -> Result<Self> {
        let n = b.nrows();
        if b.ncols() == 0 {
            return Ok(LowRankFactorization { shift_nu: shift, ..Self::zero(n) });
        }
        let svd = crate::linalg::svd(b)?;
        let sigma_hat = svd.values.iter().map(|s| (s * s - shift).max(0.0)).collect();
        let u_hat = svd.u;
        Ok(LowRankFactorization { u_hat, sigma_hat, shift_nu: shift })
    }
}

/// `Â = AΩ(ΩᵀAΩ)⁺ΩᵀA` evaluated directly from the small core matrix.
///
/// Eigenvalues of `ΩᵀAΩ` at or below `1e-12·λ_max` are treated as zero,
/// matching a pseudoinverse with that relative cutoff.
pub fn nystrom_plain<A: LinearOperator + ?Sized>(a: &A, omega: &Matrix) -> Result<LowRankFactorization> {
    check_shapes(a.dim(), omega)?;
    let n = a.dim();
    let y = a.apply(omega);
    let core = symmetrize(&(omega.transpose() * &y));
    if core.ncols() == 0 {
        return Ok(LowRankFactorization::zero(n));
    }
    let e = eig_sym(&core)?;
    let lmax = e.values[0];
    if !(lmax > 0.0) {
        return Ok(LowRankFactorization::zero(n));
    }
    let kept: Vec<usize> = (0..e.values.len()).filter(|&i| e.values[i] > PINV_RTOL * lmax).collect();
    let mut vr = Matrix::zeros(core.nrows(), kept.len());
    for (c, &i) in kept.iter().enumerate() {
        vr.set_column(c, &(e.vectors.column(i) / e.values[i].sqrt()));
    }
    LowRankFactorization::from_factor(&(y * vr), 0.0)
}

/// Shift-stabilized Nyström.
///
/// With `Q = orth(Ω)`, `Y = AQ` and `ν = eps·‖Y‖_F`, factors the shifted core
/// `Qᵀ(Y + νQ) = RᵀR`, forms `B = (Y + νQ)R⁻¹` and removes the shift from the
/// squared singular values of `B`, clamping at zero.
pub fn nystrom_stabilized<A: LinearOperator + ?Sized>(
    a: &A,
    omega: &Matrix,
    eps: f64,
) -> Result<LowRankFactorization> {
    check_shapes(a.dim(), omega)?;
    let n = a.dim();
    let q = orth(omega, ORTH_RTOL);
    if q.ncols() == 0 {
        return Ok(LowRankFactorization::zero(n));
    }
    let y = a.apply(&q);
    let nu = shift_value(&y, eps);
    let y_nu = y + &q * nu;
    let core = symmetrize(&(q.transpose() * &y_nu));
    if nu == 0.0 && core.iter().all(|&v| v == 0.0) {
        return Ok(LowRankFactorization::zero(n));
    }
    let r = chol_spd(&core, JitterPolicy::default())?.upper;
    let bt = r
        .transpose()
        .solve_lower_triangular(&y_nu.transpose())
        .ok_or(Error::NotPositiveDefinite { attempts: 0, jitter: 0.0 })?;
    LowRankFactorization::from_factor(&bt.transpose(), nu)
}

/// Which Nyström variant to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    Plain,
    #[default]
    Stabilized,
}

impl Algorithm {
    pub fn run<A: LinearOperator + ?Sized>(self, a: &A, omega: &Matrix) -> Result<LowRankFactorization> {
        match self {
            Algorithm::Plain => nystrom_plain(a, omega),
            Algorithm::Stabilized => nystrom_stabilized(a, omega, DEFAULT_SHIFT_EPS),
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plain" => Ok(Algorithm::Plain),
            "stabilized" | "stable" => Ok(Algorithm::Stabilized),
            other => Err(Error::InvalidArgument(format!("unknown algorithm '{other}' (plain|stabilized)"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Plain => "plain",
            Algorithm::Stabilized => "stabilized",
        })
    }
}

/// `ν = eps·‖Y‖_F`.
pub fn shift_value(y: &Matrix, eps: f64) -> f64 {
    eps * y.norm()
}

fn check_shapes(n: usize, omega: &Matrix) -> Result<()> {
    if omega.nrows() != n {
        return Err(Error::ShapeMismatch(format!(
            "sketch has {} rows, operator has dimension {n}",
            omega.nrows()
        )));
    }
    if omega.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("sketch contains non-finite entries".into()));
    }
    Ok(())
}

/// Randomized range finder `B ≈ QQᵀB` with `Q = orth(BΩ)`.
#[derive(Debug, Clone)]
pub struct RsvdApproximation {
    pub q: Matrix,
    /// `QᵀB`.
    pub coeffs: Matrix,
}

impl RsvdApproximation {
    pub fn residual(&self, b: &Matrix) -> Matrix {
        b - &self.q * &self.coeffs
    }

    pub fn error(&self, b: &Matrix, xi: SchattenNorm) -> f64 {
        schatten_norm(&self.residual(b), xi)
    }
}

pub fn randomized_svd(b: &Matrix, omega: &Matrix) -> Result<RsvdApproximation> {
    if omega.nrows() != b.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "sketch has {} rows, matrix has {} columns",
            omega.nrows(),
            b.ncols()
        )));
    }
    let q = orth(&(b * omega), ORTH_RTOL);
    let coeffs = q.transpose() * b;
    Ok(RsvdApproximation { q, coeffs })
}

/// `‖A − Â‖_ξ`.
pub fn approx_error(a: &SpsdMatrix, f: &LowRankFactorization, xi: SchattenNorm) -> Result<f64> {
    sym_norm(&residual(a, f)?, xi)
}

/// Operator, Frobenius and nuclear norm of `A − Â` from one eigensolve.
pub fn approx_errors(a: &SpsdMatrix, f: &LowRankFactorization) -> Result<NormTriple> {
    let e = eig_sym(&residual(a, f)?)?;
    Ok(NormTriple::from_values(e.values))
}

/// `A − Â`, symmetrized.
pub fn residual(a: &SpsdMatrix, f: &LowRankFactorization) -> Result<Matrix> {
    if f.dim() != a.dim() {
        return Err(Error::ShapeMismatch(format!(
            "factorization has dimension {}, matrix {}",
            f.dim(),
            a.dim()
        )));
    }
    Ok(symmetrize(&(a.matrix() - f.to_dense())))
}

/// Best rank-`k` error `‖Σ₂‖_ξ` from the trailing eigenvalues of `A`.
pub fn optimal_error(a: &SpsdMatrix, k: usize, xi: SchattenNorm) -> Result<f64> {
    if k > a.dim() {
        return Err(Error::InvalidArgument(format!("rank {k} exceeds dimension {}", a.dim())));
    }
    let e = a.eig()?;
    Ok(xi.of_values(e.values[k..].iter().map(|v| v.max(0.0))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::normal_matrix;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn diag(d: &[f64]) -> SpsdMatrix {
        SpsdMatrix::from_diagonal(d).unwrap()
    }

    fn random_psd(n: usize, rank: usize, seed: u64) -> SpsdMatrix {
        let g = normal_matrix(n, rank, seed, 77);
        SpsdMatrix::new(symmetrize(&(&g * g.transpose()))).unwrap()
    }

    /// Dense reference `AΩ(ΩᵀAΩ)⁺ΩᵀA` through an explicit pseudoinverse.
    fn reference_nystrom(a: &Matrix, omega: &Matrix) -> Matrix {
        let y = a * omega;
        let core = omega.transpose() * &y;
        let p = crate::linalg::pinv(&core, PINV_RTOL);
        &y * p * y.transpose()
    }

    #[test]
    fn plain_recovers_diagonal_with_selector_sketch() {
        let a = diag(&[3.0, 2.0, 1.0]);
        let omega = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let f = nystrom_plain(&a, &omega).unwrap();
        let expect = Matrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 0.0]));
        assert_relative_eq!(f.to_dense(), expect, epsilon = 1e-12);
        assert_relative_eq!(f.sigma_hat[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(f.sigma_hat[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn stabilized_recovers_diagonal_with_selector_sketch() {
        let a = diag(&[3.0, 2.0, 1.0]);
        let omega = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let f = nystrom_stabilized(&a, &omega, DEFAULT_SHIFT_EPS).unwrap();
        assert_relative_eq!(f.sigma_hat[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(f.sigma_hat[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(approx_error(&a, &f, SchattenNorm::Nuclear).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn shift_matches_example() {
        let y = Matrix::from_row_slice(2, 1, &[2.0, 0.0]);
        assert_relative_eq!(shift_value(&y, f64::EPSILON), 4.440892098500626e-16, max_relative = 1e-12);
    }

    #[test]
    fn zero_sketch_gives_zero_approximation() {
        let a = random_psd(5, 5, 1);
        let omega = Matrix::zeros(5, 3);
        for f in [nystrom_plain(&a, &omega).unwrap(), nystrom_stabilized(&a, &omega, DEFAULT_SHIFT_EPS).unwrap()] {
            assert_eq!(f.rank(), 0);
            assert_eq!(f.to_dense(), Matrix::zeros(5, 5));
        }
    }

    #[test]
    fn zero_matrix_gives_zero_approximation() {
        let a = SpsdMatrix::new(Matrix::zeros(4, 4)).unwrap();
        let omega = normal_matrix(4, 2, 3, 0);
        let f = nystrom_stabilized(&a, &omega, DEFAULT_SHIFT_EPS).unwrap();
        assert!(f.to_dense().norm() == 0.0);
    }

    #[test]
    fn full_width_sketch_is_exact() {
        let a = random_psd(6, 6, 2);
        let omega = normal_matrix(6, 6, 4, 0);
        let f = nystrom_stabilized(&a, &omega, DEFAULT_SHIFT_EPS).unwrap();
        assert!(approx_error(&a, &f, SchattenNorm::Frobenius).unwrap() <= 1e-8 * a.matrix().norm());
    }

    #[test]
    fn plain_matches_reference_on_well_conditioned_input() {
        let a = random_psd(12, 12, 3);
        let omega = normal_matrix(12, 4, 5, 0);
        let f = nystrom_plain(&a, &omega).unwrap();
        let r = reference_nystrom(a.matrix(), &omega);
        assert!((f.to_dense() - &r).norm() <= 1e-8 * r.norm());
    }

    #[test]
    fn stabilized_matches_plain_on_well_conditioned_input() {
        let a = random_psd(12, 12, 6);
        let omega = normal_matrix(12, 5, 7, 0);
        let p = nystrom_plain(&a, &omega).unwrap().to_dense();
        let s = nystrom_stabilized(&a, &omega, DEFAULT_SHIFT_EPS).unwrap().to_dense();
        assert!((p - &s).norm() <= 1e-8 * s.norm());
    }

    #[test]
    fn optimal_error_uses_trailing_eigenvalues() {
        let a = diag(&[5.0, 3.0, 2.0, 1.0]);
        assert_relative_eq!(optimal_error(&a, 2, SchattenNorm::Nuclear).unwrap(), 3.0);
        assert_relative_eq!(optimal_error(&a, 2, SchattenNorm::Operator).unwrap(), 2.0);
        assert_relative_eq!(optimal_error(&a, 2, SchattenNorm::Frobenius).unwrap(), 5f64.sqrt());
        assert_eq!(optimal_error(&a, 4, SchattenNorm::Nuclear).unwrap(), 0.0);
    }

    #[test]
    fn rsvd_residual_identity() {
        // ‖B − QQᵀB‖²_(2s) equals ‖BᵀB − Nyström(BᵀB)‖_(s) for the same sketch
        let b = normal_matrix(7, 9, 1, 0);
        let omega = normal_matrix(9, 3, 2, 0);
        let r = randomized_svd(&b, &omega).unwrap();
        let gram = SpsdMatrix::new(symmetrize(&(b.transpose() * &b))).unwrap();
        let ny = nystrom_plain(&gram, &omega).unwrap();
        let lhs = r.error(&b, SchattenNorm::Frobenius).powi(2);
        let rhs = approx_error(&gram, &ny, SchattenNorm::Nuclear).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-8);
        let lhs4 = r.error(&b, SchattenNorm::Schatten(4.0)).powi(2);
        let rhs2 = approx_error(&gram, &ny, SchattenNorm::Frobenius).unwrap();
        assert_relative_eq!(lhs4, rhs2, max_relative = 1e-8);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = diag(&[1.0, 2.0]);
        assert!(matches!(nystrom_plain(&a, &Matrix::zeros(3, 1)), Err(Error::ShapeMismatch(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn residual_is_psd_and_rank_bounded(seed in 0u64..1000, n in 3usize..10, c in 1usize..4) {
            let a = random_psd(n, n, seed);
            let omega = normal_matrix(n, c, seed, 1);
            let f = nystrom_stabilized(&a, &omega, DEFAULT_SHIFT_EPS).unwrap();
            prop_assert!(f.rank() <= c);
            let r = residual(&a, &f).unwrap();
            let lmin = eig_sym(&r).unwrap().values.last().copied().unwrap();
            prop_assert!(lmin >= -1e-10 * a.op_norm().unwrap());
            for w in f.sigma_hat.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
            let gram = f.u_hat.transpose() * &f.u_hat;
            prop_assert!((gram - Matrix::identity(f.rank(), f.rank())).norm() < 1e-10);
        }

        #[test]
        fn depends_only_on_range(seed in 0u64..1000, n in 4usize..9) {
            let a = random_psd(n, n, seed);
            let omega = normal_matrix(n, 3, seed, 2);
            let t = normal_matrix(3, 3, seed, 3);
            let f1 = nystrom_plain(&a, &omega).unwrap().to_dense();
            let f2 = nystrom_plain(&a, &(&omega * t)).unwrap().to_dense();
            prop_assert!((&f1 - &f2).norm() <= 1e-7 * a.matrix().norm());
        }
    }
}
