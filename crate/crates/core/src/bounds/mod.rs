//! Quality factors, bound constants, and the expectation, tail, structural
//! and randomized-SVD error bounds for correlated-sketch Nyström.
//!
//! With `Σ₂` the trailing eigenvalues of `A` and `K̃` the rotated sketch
//! covariance split at rank `k`:
//!
//! ```text
//! β[ξ] = ‖Σ₂^{1/2} K̃₂₂.₁ Σ₂^{1/2}‖_ξ / ‖Σ₂‖_ξ · ‖K̃₁₁⁻¹‖₂
//! δ[ξ] = ‖Σ₂^{1/2} K̃₂₁ K̃₁₁⁻² K̃₂₁ᵀ Σ₂^{1/2}‖_ξ / ‖Σ₂‖_ξ
//! ```

pub mod validate;

use std::f64::consts::E;

use crate::linalg::{eig_sym, pinv, scale_columns, scale_rows, singular_values, NormTriple, SchattenNorm, PINV_RTOL};
use crate::sketch::{partition_rotated, CovarianceSpec, PartitionedCovariance};
use crate::{Error, Matrix, Result};

/// β and δ in the operator, Frobenius and nuclear norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityFactors {
    pub beta: NormTriple,
    pub delta: NormTriple,
    pub inv_k11_opnorm: f64,
    pub k: usize,
}

impl QualityFactors {
    /// Factors of a standard Gaussian sketch.
    pub fn identity(k: usize) -> Self {
        QualityFactors {
            beta: NormTriple { op: 1.0, frob: 1.0, nuc: 1.0 },
            delta: NormTriple::default(),
            inv_k11_opnorm: 1.0,
            k,
        }
    }
}

/// Computes β and δ from a partitioned covariance and the trailing
/// eigenvalues `sigma2 = (σ_{k+1}, …, σ_n)` of `A`.
pub fn quality_factors(pc: &PartitionedCovariance, sigma2: &[f64]) -> Result<QualityFactors> {
    let m = pc.k22.nrows();
    if sigma2.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "{} trailing eigenvalues for a {m}x{m} trailing block",
            sigma2.len()
        )));
    }
    let s: Vec<f64> = sigma2.iter().map(|v| v.max(0.0)).collect();
    let tail = NormTriple::from_values(s.iter().copied());
    if !(tail.nuc > 0.0) {
        return Err(Error::ZeroTail);
    }
    let root: Vec<f64> = s.iter().map(|v| v.sqrt()).collect();

    let weighted = scale_columns(&scale_rows(&pc.k22_1, &root), &root);
    let beta_num = NormTriple::from_values(eig_sym(&weighted)?.values);

    // δ's matrix is (Z S)ᵀ(Z S) with Z = K̃₁₁⁻¹K̃₂₁ᵀ; its eigenvalues are the
    // squared singular values of the k × (n−k) matrix Z S.
    let zs = scale_columns(&pc.k11_inv_k21t, &root);
    let sv = singular_values(&zs);
    let delta_num = NormTriple::from_values(sv.iter().map(|v| v * v));

    Ok(QualityFactors {
        beta: NormTriple {
            op: beta_num.op / tail.op * pc.inv_k11_opnorm,
            frob: beta_num.frob / tail.frob * pc.inv_k11_opnorm,
            nuc: beta_num.nuc / tail.nuc * pc.inv_k11_opnorm,
        },
        delta: NormTriple {
            op: delta_num.op / tail.op,
            frob: delta_num.frob / tail.frob,
            nuc: delta_num.nuc / tail.nuc,
        },
        inv_k11_opnorm: pc.inv_k11_opnorm,
        k: pc.k,
    })
}

/// Oversampling constants of the Frobenius expectation bound and the tail bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub k: usize,
    pub p: usize,
}

pub fn bound_constants(k: usize, p: usize) -> Result<BoundConstants> {
    if p < 4 {
        return Err(Error::InvalidOversampling { p, min: 4 });
    }
    let (kf, pf) = (k as f64, p as f64);
    let denom = pf * (pf - 1.0) * (pf - 3.0);
    let d2 = E * E * (kf + pf) / (pf + 1.0).powi(2);
    Ok(BoundConstants {
        c1: kf * ((pf - 1.0) * (kf + 1.0) + 2.0) / denom,
        c2: kf * (kf + pf - 1.0) / denom,
        d1: 3.0 * kf / (pf + 1.0),
        d2,
        d3: kf.sqrt() * d2,
        k,
        p,
    })
}

fn require_rank(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidRank { k, min: 2 });
    }
    Ok(())
}

fn require_oversampling(p: usize, min: usize) -> Result<()> {
    if p < min {
        return Err(Error::InvalidOversampling { p, min });
    }
    Ok(())
}

/// Upper bound on `E‖A − Â‖_ξ` for `ξ ∈ {op, F, Tr}`. `tail` holds the
/// norms of `Σ₂`.
pub fn expected_bound(xi: SchattenNorm, qf: &QualityFactors, p: usize, tail: &NormTriple) -> Result<f64> {
    let k = qf.k;
    require_rank(k)?;
    let (kf, pf) = (k as f64, p as f64);
    match xi.canonical() {
        SchattenNorm::Operator => {
            require_oversampling(p, 2)?;
            Ok((1.0 + 3.0 * kf / (pf - 1.0) * qf.beta.op + 3.0 * qf.delta.op) * tail.op
                + 3.0 * E * E * (kf + pf) / (pf * pf - 1.0) * qf.beta.nuc * tail.nuc)
        }
        SchattenNorm::Nuclear => {
            require_oversampling(p, 2)?;
            Ok((1.0 + kf / (pf - 1.0) * qf.beta.nuc + qf.delta.nuc) * tail.nuc)
        }
        SchattenNorm::Frobenius => {
            let c = bound_constants(k, p)?;
            Ok((1.0 + 2.0 * qf.delta.frob + 2.0 * c.c1.sqrt() * qf.beta.frob) * tail.frob
                + 2.0 * c.c2.sqrt() * qf.beta.nuc * tail.nuc)
        }
        SchattenNorm::Schatten(s) => {
            Err(Error::InvalidArgument(format!("no bound for the Schatten-{s} norm")))
        }
    }
}

/// Right-hand side of a tail bound and the probability that it fails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    pub rhs: f64,
    pub failure_prob: f64,
}

/// Bound on `‖A − Â‖_ξ` holding with probability at least `1 − failure_prob`.
pub fn tail_bound(
    xi: SchattenNorm,
    qf: &QualityFactors,
    p: usize,
    tail: &NormTriple,
    t: f64,
    u: f64,
) -> Result<TailBound> {
    require_rank(qf.k)?;
    let c = bound_constants(qf.k, p)?;
    if !(t >= 1.0 && u >= 1.0) {
        return Err(Error::InvalidArgument(format!("tail parameters need t, u >= 1, got t={t}, u={u}")));
    }
    let (t2, u2) = (t * t, u * u);
    let pf = p as f64;
    let gauss = (-u2 / 2.0).exp();
    let (b, d) = (&qf.beta, &qf.delta);
    match xi.canonical() {
        SchattenNorm::Operator => Ok(TailBound {
            rhs: (1.0 + 4.0 * d.op + 4.0 * (c.d1 + c.d2 * u2) * t2 * b.op) * tail.op
                + 4.0 * c.d2 * t2 * b.nuc * tail.nuc,
            failure_prob: 2.0 * t.powf(-pf) + gauss,
        }),
        SchattenNorm::Nuclear => Ok(TailBound {
            rhs: (1.0 + 2.0 * d.nuc + c.d1 * t2 * b.nuc) * tail.nuc
                + 2.0 * c.d2 * t2 * u2 * b.op * tail.op,
            failure_prob: 2.0 * t.powf(-pf) + gauss,
        }),
        SchattenNorm::Frobenius => Ok(TailBound {
            rhs: tail.frob
                + 4.0 * (d.frob + t2 * (c.d1 + c.d3) * b.frob) * tail.frob
                + 4.0 * t2 * c.d3 * b.nuc * tail.nuc
                + 2.0 * t2 * u2 * c.d2 * b.op * tail.op,
            failure_prob: 3.0 * t.powf(-pf) + gauss,
        }),
        SchattenNorm::Schatten(s) => {
            Err(Error::InvalidArgument(format!("no bound for the Schatten-{s} norm")))
        }
    }
}

/// Which randomized SVD bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsvdBound {
    /// Schur-complement based bound.
    Ours,
    /// Earlier bound in terms of the unconditioned block `K̃₂₂`.
    Prior,
}

/// Upper bound on `E‖B − QQᵀB‖_F²` for `Q = orth(BΩ)`, `Ω ~ N(0, K)` with
/// `k + p` columns. `singulars` are the singular values of `B` (descending,
/// padded with zeros to the column count) and `right` the matching right
/// singular vectors.
pub fn rsvd_expected_frob_bound(
    which: RsvdBound,
    singulars: &[f64],
    cov: &CovarianceSpec,
    right: &Matrix,
    k: usize,
    p: usize,
) -> Result<f64> {
    require_oversampling(p, 2)?;
    let n = cov.dim();
    if right.nrows() != n || right.ncols() != n || singulars.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "need {n} singular values and an {n}x{n} basis, got {} and {}x{}",
            singulars.len(),
            right.nrows(),
            right.ncols()
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("need 1 <= k < n, got k={k}, n={n}")));
    }
    let kt = crate::linalg::symmetrize(&(right.transpose() * cov.covariance().matrix() * right));
    let pc = partition_rotated(&kt, k)?;
    let s2: Vec<f64> = singulars[k..].iter().map(|s| s * s).collect();
    let frob2: f64 = s2.iter().sum();
    if frob2 == 0.0 {
        return Ok(0.0);
    }
    let (kf, pf) = (k as f64, p as f64);
    match which {
        RsvdBound::Ours => {
            let beta = (0..s2.len()).map(|i| s2[i] * pc.k22_1[(i, i)]).sum::<f64>() * pc.inv_k11_opnorm / frob2;
            let delta = (0..s2.len())
                .map(|i| s2[i] * pc.k11_inv_k21t.column(i).norm_squared())
                .sum::<f64>()
                / frob2;
            Ok((1.0 + kf / (pf - 1.0) * beta + delta) * frob2)
        }
        RsvdBound::Prior => {
            let gamma = (0..s2.len()).map(|i| s2[i] * pc.k22[(i, i)]).sum::<f64>() * pc.inv_k11_opnorm / frob2;
            Ok((1.0 + kf * (kf + pf) / (pf - 1.0) * gamma) * frob2)
        }
    }
}

/// Per-draw structural bound `‖Σ₂‖_ξ + ‖MᵀM‖_ξ` with
/// `M = Σ₂^{1/2}Ω₂Ω₁⁺`, in all three norms.
///
/// `omega1` (k × c) and `omega2` ((n−k) × c) are the sketch in the
/// eigenbasis of `A`; `sigma2` the trailing eigenvalues.
pub fn structural_bound(sigma2: &[f64], omega1: &Matrix, omega2: &Matrix) -> Result<NormTriple> {
    if omega2.nrows() != sigma2.len() || omega1.ncols() != omega2.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "Omega1 {}x{}, Omega2 {}x{}, {} trailing eigenvalues",
            omega1.nrows(),
            omega1.ncols(),
            omega2.nrows(),
            omega2.ncols(),
            sigma2.len()
        )));
    }
    let root: Vec<f64> = sigma2.iter().map(|v| v.max(0.0).sqrt()).collect();
    let m = scale_rows(omega2, &root) * pinv(omega1, PINV_RTOL);
    let sv = singular_values(&m);
    let extra = NormTriple::from_values(sv.iter().map(|v| v * v));
    let tail = NormTriple::from_values(sigma2.iter().map(|v| v.max(0.0)));
    Ok(NormTriple { op: tail.op + extra.op, frob: tail.frob + extra.frob, nuc: tail.nuc + extra.nuc })
}
