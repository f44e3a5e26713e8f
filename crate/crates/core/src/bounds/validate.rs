//! Monte Carlo audits of the expectation and tail bounds.

use std::fmt;

use super::{expected_bound, quality_factors, tail_bound, QualityFactors};
use crate::approx::{approx_errors, Algorithm};
use crate::linalg::{NormTriple, SchattenNorm, SpsdMatrix};
use crate::sketch::{draw_sketch_stream, partition_covariance, CovarianceSpec};
use crate::rng::normal_matrix;
use crate::{par, Error, Result};

pub const MIN_EXPECTATION_TRIALS: usize = 100;
pub const MIN_TAIL_TRIALS: usize = 1000;

/// Relative allowance for floating-point error when comparing a single
/// draw, or a zero-variance mean, against a bound it can attain exactly.
pub const ROUNDOFF_RTOL: f64 = 1e-10;

pub const BOUNDS_CSV_HEADER: &str = "norm,k,p,t,u,mean_err,stderr,bound,empirical_rate,predicted_rate,pass";

/// A fixed matrix, sketch covariance and sketch size to audit.
#[derive(Debug, Clone, Copy)]
pub struct McProblem<'a> {
    pub a: &'a SpsdMatrix,
    pub cov: &'a CovarianceSpec,
    pub k: usize,
    pub p: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
}

impl<'a> McProblem<'a> {
    pub fn new(a: &'a SpsdMatrix, cov: &'a CovarianceSpec, k: usize, p: usize, seed: u64) -> Self {
        McProblem { a, cov, k, p, seed, algorithm: Algorithm::default() }
    }

    pub fn quality_factors(&self) -> Result<QualityFactors> {
        let e = self.a.eig()?;
        let pc = partition_covariance(self.cov, e, self.k)?;
        quality_factors(&pc, &e.values[self.k..])
    }

    /// Norms of `Σ₂`.
    pub fn tail_norms(&self) -> Result<NormTriple> {
        let e = self.a.eig()?;
        Ok(NormTriple::from_values(e.values[self.k..].iter().map(|v| v.max(0.0))))
    }

    /// Errors `‖A − Â‖` of `trials` independent draws; trial `i` uses stream `i`.
    pub fn sample_errors(&self, trials: usize) -> Result<Vec<NormTriple>> {
        if self.cov.dim() != self.a.dim() {
            return Err(Error::ShapeMismatch(format!(
                "covariance is {0}x{0}, matrix is {1}x{1}",
                self.cov.dim(),
                self.a.dim()
            )));
        }
        self.a.eig()?;
        par::map_indexed(trials, |i| {
            let omega = draw_sketch_stream(self.cov, self.k + self.p, self.seed, i as u64);
            let f = self.algorithm.run(self.a, &omega)?;
            approx_errors(self.a, &f)
        })
        .into_iter()
        .collect()
    }
}

/// Sample mean against the expectation bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectationReport {
    pub norm: SchattenNorm,
    pub k: usize,
    pub p: usize,
    pub trials: usize,
    pub mean_err: f64,
    pub stderr: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Exceedance rate of the tail bound against its failure probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailReport {
    pub norm: SchattenNorm,
    pub k: usize,
    pub p: usize,
    pub t: f64,
    pub u: f64,
    pub trials: usize,
    pub rhs: f64,
    pub empirical_rate: f64,
    pub predicted_rate: f64,
    pub pass: bool,
}

pub fn validate_expectation_mc(problem: &McProblem, xi: SchattenNorm, trials: usize) -> Result<ExpectationReport> {
    check_trials(trials, MIN_EXPECTATION_TRIALS)?;
    let samples = problem.sample_errors(trials)?;
    expectation_from_samples(problem, xi, &samples)
}

pub fn validate_tail_mc(problem: &McProblem, xi: SchattenNorm, t: f64, u: f64, trials: usize) -> Result<TailReport> {
    check_trials(trials, MIN_TAIL_TRIALS)?;
    let samples = problem.sample_errors(trials)?;
    tail_from_samples(problem, xi, t, u, &samples)
}

/// As [`validate_expectation_mc`], reusing errors already drawn.
pub fn expectation_from_samples(
    problem: &McProblem,
    xi: SchattenNorm,
    samples: &[NormTriple],
) -> Result<ExpectationReport> {
    check_trials(samples.len(), MIN_EXPECTATION_TRIALS)?;
    let bound = expected_bound(xi, &problem.quality_factors()?, problem.p, &problem.tail_norms()?)?;
    let (mean_err, stderr) = mean_stderr(samples.iter().map(|s| s.get(xi)));
    let pass = mean_err - 3.0 * stderr <= bound * (1.0 + ROUNDOFF_RTOL);
    Ok(ExpectationReport { norm: xi, k: problem.k, p: problem.p, trials: samples.len(), mean_err, stderr, bound, pass })
}

/// As [`validate_tail_mc`], reusing errors already drawn.
pub fn tail_from_samples(
    problem: &McProblem,
    xi: SchattenNorm,
    t: f64,
    u: f64,
    samples: &[NormTriple],
) -> Result<TailReport> {
    check_trials(samples.len(), MIN_TAIL_TRIALS)?;
    let tb = tail_bound(xi, &problem.quality_factors()?, problem.p, &problem.tail_norms()?, t, u)?;
    let limit = tb.rhs * (1.0 + ROUNDOFF_RTOL);
    let exceed = samples.iter().filter(|s| s.get(xi) > limit).count();
    let n = samples.len() as f64;
    let rate = exceed as f64 / n;
    let pred = tb.failure_prob;
    let pass = pred >= 1.0 || rate <= pred + 3.0 * (pred * (1.0 - pred) / n).sqrt();
    Ok(TailReport {
        norm: xi,
        k: problem.k,
        p: problem.p,
        t,
        u,
        trials: samples.len(),
        rhs: tb.rhs,
        empirical_rate: rate,
        predicted_rate: pred,
        pass,
    })
}

fn check_trials(trials: usize, min: usize) -> Result<()> {
    if trials < min {
        return Err(Error::InvalidTrials { trials, min });
    }
    Ok(())
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr<I: IntoIterator<Item = f64>>(values: I) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().collect();
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One line of the bounds report; fields that do not apply stay empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub norm: SchattenNorm,
    pub k: usize,
    pub p: usize,
    pub t: Option<f64>,
    pub u: Option<f64>,
    pub mean_err: Option<f64>,
    pub stderr: Option<f64>,
    pub bound: f64,
    pub empirical_rate: Option<f64>,
    pub predicted_rate: Option<f64>,
    pub pass: bool,
}

impl From<ExpectationReport> for BoundRow {
    fn from(r: ExpectationReport) -> Self {
        BoundRow {
            norm: r.norm,
            k: r.k,
            p: r.p,
            t: None,
            u: None,
            mean_err: Some(r.mean_err),
            stderr: Some(r.stderr),
            bound: r.bound,
            empirical_rate: None,
            predicted_rate: None,
            pass: r.pass,
        }
    }
}

impl From<TailReport> for BoundRow {
    fn from(r: TailReport) -> Self {
        BoundRow {
            norm: r.norm,
            k: r.k,
            p: r.p,
            t: Some(r.t),
            u: Some(r.u),
            mean_err: None,
            stderr: None,
            bound: r.rhs,
            empirical_rate: Some(r.empirical_rate),
            predicted_rate: Some(r.predicted_rate),
            pass: r.pass,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl fmt::Display for BoundRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{},{},{:e},{},{},{}",
            self.norm,
            self.k,
            self.p,
            opt(self.t),
            opt(self.u),
            opt(self.mean_err),
            opt(self.stderr),
            self.bound,
            opt(self.empirical_rate),
            opt(self.predicted_rate),
            self.pass
        )
    }
}

/// Expectation rows for every bound norm followed by tail rows for every
/// `(t, u)` pair, sharing one batch of draws.
pub fn run_bounds_suite(
    problem: &McProblem,
    expectation_trials: usize,
    tail_trials: usize,
    tu: &[(f64, f64)],
) -> Result<Vec<BoundRow>> {
    check_trials(expectation_trials, MIN_EXPECTATION_TRIALS)?;
    if !tu.is_empty() {
        check_trials(tail_trials, MIN_TAIL_TRIALS)?;
    }
    let total = if tu.is_empty() { expectation_trials } else { expectation_trials.max(tail_trials) };
    let samples = problem.sample_errors(total)?;
    let mut rows = Vec::new();
    for xi in SchattenNorm::BOUND_NORMS {
        rows.push(expectation_from_samples(problem, xi, &samples[..expectation_trials])?.into());
    }
    for &(t, u) in tu {
        for xi in SchattenNorm::BOUND_NORMS {
            rows.push(tail_from_samples(problem, xi, t, u, &samples[..tail_trials])?.into());
        }
    }
    Ok(rows)
}

/// `diag(1, 1/2, 1/4, …)` of size `n`.
pub fn geometric_diagonal(n: usize) -> SpsdMatrix {
    let d: Vec<f64> = (0..n).map(|i| 2f64.powi(-(i as i32))).collect();
    SpsdMatrix::from_diagonal(&d).expect("positive diagonal")
}

/// Sketch covariances used by the bound audits on a diagonal matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditCovariance {
    Identity,
    /// `diag(1/(i+1))`, sharing the eigenvectors of a diagonal `A`.
    Aligned,
    /// `GGᵀ/n` for a standard Gaussian `n × n` matrix `G`.
    Random,
}

impl AuditCovariance {
    pub const ALL: [AuditCovariance; 3] = [AuditCovariance::Identity, AuditCovariance::Aligned, AuditCovariance::Random];

    pub fn build(self, n: usize, seed: u64) -> Result<CovarianceSpec> {
        match self {
            AuditCovariance::Identity => Ok(CovarianceSpec::identity(n)),
            AuditCovariance::Aligned => {
                let d: Vec<f64> = (0..n).map(|i| 1.0 / (i + 1) as f64).collect();
                CovarianceSpec::new(SpsdMatrix::from_diagonal(&d)?)
            }
            AuditCovariance::Random => {
                let g = normal_matrix(n, n, seed, u64::MAX);
                CovarianceSpec::new(SpsdMatrix::new(&g * g.transpose() / n as f64)?)
            }
        }
    }
}

impl std::str::FromStr for AuditCovariance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "i" => Ok(AuditCovariance::Identity),
            "aligned" => Ok(AuditCovariance::Aligned),
            "random" => Ok(AuditCovariance::Random),
            other => Err(Error::InvalidArgument(format!("unknown covariance '{other}' (identity|aligned|random)"))),
        }
    }
}

impl fmt::Display for AuditCovariance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AuditCovariance::Identity => "identity",
            AuditCovariance::Aligned => "aligned",
            AuditCovariance::Random => "random",
        })
    }
}
