//! Dense symmetric linear algebra.
//!
//! Everything here works on [`Matrix`] (column-major `nalgebra::DMatrix<f64>`).
//! Cholesky and triangular solves are nalgebra's; the symmetric eigensolver and
//! the SVD are faer's. This module adds the conventions the rest of the crate relies on:
//! descending eigenvalues, PSD tolerance checks, clamped square roots,
//! jittered Cholesky, truncated pseudoinverse and a rank-revealing `orth`.

mod io;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{Cholesky, DVector};

use crate::{Error, Matrix, Result};

pub use io::{read_matrix, read_matrix_file, write_matrix, write_matrix_file};

/// Relative tolerance for accepting slightly negative eigenvalues as PSD.
pub const PSD_ATOL: f64 = 1e-10;
/// Default relative singular-value cutoff of [`pinv`].
pub const PINV_RTOL: f64 = 1e-12;
/// Default relative column-norm cutoff of [`orth`].
pub const ORTH_RTOL: f64 = 1e-12;
/// Largest supported matrix dimension.
pub const MAX_DIM: usize = 4096;

/// Unitarily invariant norm selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchattenNorm {
    Operator,
    Frobenius,
    Nuclear,
    /// General Schatten `s`-norm, `s >= 1` (`s = inf` allowed).
    Schatten(f64),
}

impl SchattenNorm {
    /// The three norms every bound is stated in.
    pub const BOUND_NORMS: [SchattenNorm; 3] =
        [SchattenNorm::Operator, SchattenNorm::Frobenius, SchattenNorm::Nuclear];

    /// Norm of a diagonal operator with the given entries (signs ignored).
    pub fn of_values<I: IntoIterator<Item = f64>>(self, values: I) -> f64 {
        let abs = values.into_iter().map(f64::abs);
        match self.canonical() {
            SchattenNorm::Operator => abs.fold(0.0, f64::max),
            SchattenNorm::Nuclear => abs.sum(),
            SchattenNorm::Frobenius => abs.map(|v| v * v).sum::<f64>().sqrt(),
            SchattenNorm::Schatten(s) => {
                let v: Vec<f64> = abs.collect();
                let scale = v.iter().cloned().fold(0.0, f64::max);
                if scale == 0.0 {
                    return 0.0;
                }
                scale * v.iter().map(|x| (x / scale).powf(s)).sum::<f64>().powf(1.0 / s)
            }
        }
    }

    /// Maps `Schatten(1 | 2 | inf)` onto the named variants.
    pub fn canonical(self) -> SchattenNorm {
        match self {
            SchattenNorm::Schatten(1.0) => SchattenNorm::Nuclear,
            SchattenNorm::Schatten(2.0) => SchattenNorm::Frobenius,
            SchattenNorm::Schatten(s) if s.is_infinite() => SchattenNorm::Operator,
            other => other,
        }
    }

    /// Schatten exponent (`inf` for the operator norm).
    pub fn exponent(self) -> f64 {
        match self {
            SchattenNorm::Operator => f64::INFINITY,
            SchattenNorm::Frobenius => 2.0,
            SchattenNorm::Nuclear => 1.0,
            SchattenNorm::Schatten(s) => s,
        }
    }
}

impl fmt::Display for SchattenNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.canonical() {
            SchattenNorm::Operator => write!(f, "op"),
            SchattenNorm::Frobenius => write!(f, "F"),
            SchattenNorm::Nuclear => write!(f, "Tr"),
            SchattenNorm::Schatten(s) => write!(f, "S{s}"),
        }
    }
}

impl FromStr for SchattenNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "op" | "2" | "spectral" | "operator" => Ok(SchattenNorm::Operator),
            "f" | "fro" | "frob" | "frobenius" | "hs" => Ok(SchattenNorm::Frobenius),
            "tr" | "nuc" | "nuclear" | "trace" | "*" => Ok(SchattenNorm::Nuclear),
            other => other
                .strip_prefix('s')
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| *v >= 1.0)
                .map(|v| SchattenNorm::Schatten(v).canonical())
                .ok_or_else(|| Error::InvalidArgument(format!("unknown norm '{s}'"))),
        }
    }
}

/// Operator, Frobenius and nuclear norm of the same object.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormTriple {
    pub op: f64,
    pub frob: f64,
    pub nuc: f64,
}

impl NormTriple {
    pub fn from_values<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        NormTriple {
            op: SchattenNorm::Operator.of_values(v.iter().copied()),
            frob: SchattenNorm::Frobenius.of_values(v.iter().copied()),
            nuc: SchattenNorm::Nuclear.of_values(v.iter().copied()),
        }
    }

    /// Panics for general Schatten exponents other than 1, 2, inf.
    pub fn get(&self, xi: SchattenNorm) -> f64 {
        match xi.canonical() {
            SchattenNorm::Operator => self.op,
            SchattenNorm::Frobenius => self.frob,
            SchattenNorm::Nuclear => self.nuc,
            SchattenNorm::Schatten(s) => panic!("NormTriple holds no Schatten-{s} value"),
        }
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        NormTriple { op: f(self.op), frob: f(self.frob), nuc: f(self.nuc) }
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub vectors: Matrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let scaled = scale_columns(&self.vectors, &self.values);
        &scaled * self.vectors.transpose()
    }

    /// First `k` eigenvectors (`U₁`).
    pub fn leading_vectors(&self, k: usize) -> Matrix {
        self.vectors.columns(0, k).into_owned()
    }

    /// Remaining `n - k` eigenvectors (`U₂`).
    pub fn trailing_vectors(&self, k: usize) -> Matrix {
        self.vectors.columns(k, self.dim() - k).into_owned()
    }

    pub fn trailing_values(&self, k: usize) -> &[f64] {
        &self.values[k.min(self.dim())..]
    }
}

/// Symmetric eigendecomposition with descending eigenvalues.
pub fn eig_sym(m: &Matrix) -> Result<EigenDecomposition> {
    let n = require_square(m)?;
    require_finite(m)?;
    if n == 0 {
        return Ok(EigenDecomposition { values: vec![], vectors: Matrix::zeros(0, 0) });
    }
    let sym = to_faer(&symmetrize(m));
    let eig = sym.self_adjoint_eigen(faer::Side::Lower).map_err(|_| Error::NonConvergence)?;
    let (s, u) = (eig.S(), eig.U());
    // faer returns ascending order
    let values = (0..n).rev().map(|i| s[i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| u[(r, n - 1 - c)]);
    Ok(EigenDecomposition { values, vectors })
}

/// Symmetric positive semi-definite matrix with a lazily cached eigendecomposition.
///
/// Construction symmetrizes the input as `(A + Aᵀ)/2`, so `A[(i,j)] == A[(j,i)]`
/// holds bit-exactly afterwards.
#[derive(Debug, Clone)]
pub struct SpsdMatrix {
    mat: Matrix,
    eig: OnceLock<EigenDecomposition>,
}

impl SpsdMatrix {
    /// Symmetrizes and verifies PSD-ness (min eigenvalue ≥ −[`PSD_ATOL`]·‖A‖₂).
    pub fn new(m: Matrix) -> Result<Self> {
        let s = Self::new_unverified(m)?;
        s.check_psd()?;
        Ok(s)
    }

    /// Symmetrizes without computing the spectrum. For matrices PSD by
    /// construction (kernel Gram matrices, `BᵀB`); spectral routines still
    /// check PSD-ness when they first touch the eigendecomposition.
    pub fn new_unverified(m: Matrix) -> Result<Self> {
        let n = require_square(&m)?;
        if n > MAX_DIM {
            return Err(Error::ShapeMismatch(format!("dimension {n} exceeds {MAX_DIM}")));
        }
        require_finite(&m)?;
        Ok(SpsdMatrix { mat: symmetrize(&m), eig: OnceLock::new() })
    }

    pub fn identity(n: usize) -> Self {
        let mat = Matrix::identity(n, n);
        let eig = EigenDecomposition { values: vec![1.0; n], vectors: mat.clone() };
        Self::with_eig(mat, eig)
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// Builds `V diag(values) Vᵀ` and keeps the given eigenpairs as the cache.
    /// `values` must already be sorted descending.
    pub fn from_eigen(values: Vec<f64>, vectors: Matrix) -> Result<Self> {
        let eig = EigenDecomposition { values, vectors };
        let mat = symmetrize(&eig.reconstruct());
        Ok(Self::with_eig(mat, eig))
    }

    fn with_eig(mat: Matrix, eig: EigenDecomposition) -> Self {
        let cell = OnceLock::new();
        let _ = cell.set(eig);
        SpsdMatrix { mat, eig: cell }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.mat
    }

    pub fn into_matrix(self) -> Matrix {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    pub fn eig(&self) -> Result<&EigenDecomposition> {
        if let Some(e) = self.eig.get() {
            return Ok(e);
        }
        let e = eig_sym(&self.mat)?;
        let _ = self.eig.set(e);
        Ok(self.eig.get().expect("eigendecomposition cached"))
    }

    pub fn op_norm(&self) -> Result<f64> {
        Ok(self.eig()?.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }

    /// Norm computed from the (absolute) eigenvalues.
    pub fn norm(&self, xi: SchattenNorm) -> Result<f64> {
        Ok(xi.of_values(self.eig()?.values.iter().copied()))
    }

    pub fn check_psd(&self) -> Result<()> {
        let e = self.eig()?;
        let scale = e.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let min = e.values.last().copied().unwrap_or(0.0);
        let tol = PSD_ATOL * scale;
        if min < -tol {
            return Err(Error::NotPsd { min_eig: min, tol });
        }
        Ok(())
    }
}

/// Schatten norm of an arbitrary (possibly rectangular) matrix.
///
/// Frobenius is evaluated entrywise; every other norm goes through the
/// singular values.
pub fn schatten_norm(m: &Matrix, xi: SchattenNorm) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    match xi.canonical() {
        SchattenNorm::Frobenius => m.norm(),
        other => other.of_values(singular_values(m)),
    }
}

/// Norm of a symmetric matrix from its eigenvalues.
pub fn sym_norm(m: &Matrix, xi: SchattenNorm) -> Result<f64> {
    if m.is_empty() {
        return Ok(0.0);
    }
    Ok(xi.of_values(eig_sym(m)?.values))
}

/// PSD square root; eigenvalues inside the tolerance band below zero are clamped.
pub fn psd_sqrt(a: &SpsdMatrix) -> Result<SpsdMatrix> {
    a.check_psd()?;
    let e = a.eig()?;
    let roots: Vec<f64> = e.values.iter().map(|v| v.max(0.0).sqrt()).collect();
    SpsdMatrix::from_eigen(roots, e.vectors.clone())
}

/// Jitter escalation for [`chol_spd`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JitterPolicy {
    /// Number of escalation steps; step `j` adds `10^j · eps · tr(A)/n`.
    pub steps: u32,
}

impl JitterPolicy {
    pub const NONE: JitterPolicy = JitterPolicy { steps: 0 };
}

impl Default for JitterPolicy {
    fn default() -> Self {
        JitterPolicy { steps: 7 }
    }
}

/// Upper-triangular Cholesky factor `R` with `A + jitter·I = RᵀR`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    pub upper: Matrix,
    pub jitter: f64,
}

/// Cholesky of the symmetric part of `a`, escalating a diagonal jitter on failure.
pub fn chol_spd(a: &Matrix, policy: JitterPolicy) -> Result<CholeskyFactor> {
    let n = require_square(a)?;
    require_finite(a)?;
    let sym = symmetrize(a);
    if let Some(c) = Cholesky::new(sym.clone()) {
        return Ok(CholeskyFactor { upper: c.l().transpose(), jitter: 0.0 });
    }
    let base = f64::EPSILON * sym.trace().abs() / n.max(1) as f64;
    let mut jitter = 0.0;
    for j in 0..policy.steps {
        jitter = 10f64.powi(j as i32) * base;
        if jitter == 0.0 {
            break;
        }
        let mut shifted = sym.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Ok(CholeskyFactor { upper: c.l().transpose(), jitter });
        }
    }
    Err(Error::NotPositiveDefinite { attempts: policy.steps as usize, jitter })
}

/// Moore–Penrose pseudoinverse with singular values below `rtol·σ_max` discarded.
pub fn pinv(m: &Matrix, rtol: f64) -> Matrix {
    let (r, c) = m.shape();
    if m.is_empty() {
        return Matrix::zeros(c, r);
    }
    let Ok(svd) = svd(m) else {
        return Matrix::from_element(c, r, f64::NAN);
    };
    let smax = svd.values.first().copied().unwrap_or(0.0);
    let mut out = Matrix::zeros(c, r);
    if smax == 0.0 {
        return out;
    }
    for (i, &s) in svd.values.iter().enumerate() {
        if s > rtol * smax {
            out += svd.v.column(i) * svd.u.column(i).transpose() / s;
        }
    }
    out
}

/// Thin SVD `M = U diag(values) Vᵀ` with descending singular values.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub values: Vec<f64>,
    pub v: Matrix,
}

pub fn svd(m: &Matrix) -> Result<Svd> {
    require_finite(m)?;
    let (r, c) = m.shape();
    let q = r.min(c);
    if q == 0 {
        return Ok(Svd { u: Matrix::zeros(r, 0), values: vec![], v: Matrix::zeros(c, 0) });
    }
    let f = to_faer(m).thin_svd().map_err(|_| Error::NonConvergence)?;
    let (u, s, v) = (f.U(), f.S(), f.V());
    Ok(Svd {
        u: Matrix::from_fn(r, q, |i, j| u[(i, j)]),
        values: (0..q).map(|i| s[i]).collect(),
        v: Matrix::from_fn(c, q, |i, j| v[(i, j)]),
    })
}

/// Singular values in descending order; NaN entries if the iteration fails.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    let q = m.nrows().min(m.ncols());
    if q == 0 {
        return vec![];
    }
    if m.iter().any(|v| !v.is_finite()) {
        return vec![f64::NAN; q];
    }
    match to_faer(m).singular_values() {
        Ok(v) => v,
        Err(_) => vec![f64::NAN; q],
    }
}

fn to_faer(m: &Matrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Orthonormal basis for the range of `m` by column-pivoted Gram–Schmidt with
/// reorthogonalization. Columns whose residual norm falls to `rtol` times the
/// largest column norm are dropped, so the result has numerical-rank columns.
pub fn orth(m: &Matrix, rtol: f64) -> Matrix {
    let (n, c) = m.shape();
    let mut cols: Vec<DVector<f64>> = (0..c).map(|j| m.column(j).into_owned()).collect();
    let mut norms: Vec<f64> = cols.iter().map(|v| v.norm()).collect();
    let largest = norms.iter().cloned().fold(0.0, f64::max);
    if largest == 0.0 || !largest.is_finite() {
        return Matrix::zeros(n, 0);
    }
    let tol = rtol * largest;
    let mut remaining: Vec<usize> = (0..c).collect();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    while !remaining.is_empty() && basis.len() < n {
        let (pos, j) = remaining
            .iter()
            .enumerate()
            .map(|(p, &j)| (p, j))
            .max_by(|a, b| norms[a.1].total_cmp(&norms[b.1]).then(b.1.cmp(&a.1)))
            .expect("non-empty");
        if norms[j] <= tol {
            break;
        }
        remaining.remove(pos);
        let mut v = cols[j].clone();
        for q in &basis {
            let d = q.dot(&v);
            v.axpy(-d, q, 1.0);
        }
        let nv = v.norm();
        if nv <= tol {
            continue;
        }
        v /= nv;
        for &r in &remaining {
            let d = v.dot(&cols[r]);
            cols[r].axpy(-d, &v, 1.0);
            norms[r] = cols[r].norm();
        }
        basis.push(v);
    }
    if basis.is_empty() {
        Matrix::zeros(n, 0)
    } else {
        Matrix::from_columns(&basis)
    }
}

/// `(M + Mᵀ)/2`, bit-exactly symmetric.
pub fn symmetrize(m: &Matrix) -> Matrix {
    let n = m.nrows();
    let mut s = m.clone();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

/// `M · diag(d)`.
pub fn scale_columns(m: &Matrix, d: &[f64]) -> Matrix {
    let mut out = m.clone();
    for (j, &s) in d.iter().enumerate() {
        out.column_mut(j).scale_mut(s);
    }
    out
}

/// `diag(d) · M`.
pub fn scale_rows(m: &Matrix, d: &[f64]) -> Matrix {
    let mut out = m.clone();
    for (i, &s) in d.iter().enumerate() {
        out.row_mut(i).scale_mut(s);
    }
    out
}

fn require_square(m: &Matrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

fn require_finite(m: &Matrix) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument("matrix has non-finite entries".into()))
    }
}
