//! Moments and tail probabilities of Gaussian and pseudoinverted Gaussian
//! matrices, each with a Monte Carlo estimator.
//!
//! Shapes: `Ψ` is a standard Gaussian `m₂ × n₁` matrix, `C` is `m₁ × m₂`,
//! `D` is `n₁ × n₂`, `B` is `m₁ × n₂`. `Ω₁ = K₁₁^{1/2}X` with `X` a standard
//! Gaussian `k × (k+p)` matrix, so `Ω₁Ω₁ᵀ` is Wishart with `k+p` degrees of
//! freedom and `‖Ω₁⁺‖` norms are spectral functions of `(Ω₁Ω₁ᵀ)⁻¹`.

use std::f64::consts::E;
use std::fmt;

use nalgebra::SymmetricEigen;
use rand::Rng;

use crate::linalg::{eig_sym, psd_sqrt, schatten_norm, symmetrize, SchattenNorm, SpsdMatrix};
use crate::rng::{fill_normal, stream_rng};
use crate::sketch::K11_SINGULAR_RTOL;
use crate::{par, Error, Matrix, Result};

pub const MIN_EQUALITY_TRIALS: usize = 10_000;
pub const MIN_INEQUALITY_TRIALS: usize = 1_000;
pub const LEMMAS_CSV_HEADER: &str = "formula,closed_form,mc_estimate,stderr,trials,pass";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftedMoment {
    /// `E‖B + CΨD‖_F²`.
    Frob2,
    /// `E‖CΨD‖₍₄₎⁴`.
    Schatten4Pow4,
    /// Upper bound on `E‖CΨD‖₂²`.
    Spectral2Ub,
    /// `E‖CΨD‖_F⁴`.
    Frob4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WishartMoment {
    /// `E‖Ω₁⁺B‖_F²`.
    Frob2WithB,
    /// Upper bound on `E‖Ω₁⁺‖₂²`.
    Spectral2Ub,
    /// `E‖Ω₁⁺‖₍₄₎⁴`.
    Schatten4Pow4,
    /// `E‖Ω₁⁺‖_F⁴`.
    Frob4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PinvTail {
    Frob,
    Spectral,
    Schatten4,
}

fn pow4_s4(m: &Matrix) -> f64 {
    (m.transpose() * m).norm_squared()
}

pub fn shifted_gaussian_moment(which: ShiftedMoment, b: Option<&Matrix>, c: &Matrix, d: &Matrix) -> Result<f64> {
    if let Some(b) = b {
        if b.nrows() != c.nrows() || b.ncols() != d.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "B is {}x{}, C is {}x{}, D is {}x{}",
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
    }
    let (cf2, df2) = (c.norm_squared(), d.norm_squared());
    Ok(match which {
        ShiftedMoment::Frob2 => b.map_or(0.0, |b| b.norm_squared()) + cf2 * df2,
        ShiftedMoment::Schatten4Pow4 => {
            let (c4, d4) = (pow4_s4(c), pow4_s4(d));
            c4 * d4 + cf2 * cf2 * d4 + c4 * df2 * df2
        }
        ShiftedMoment::Spectral2Ub => {
            let (c2, d2) = (schatten_norm(c, SchattenNorm::Operator), schatten_norm(d, SchattenNorm::Operator));
            (cf2.sqrt() * d2 + c2 * df2.sqrt()).powi(2)
        }
        ShiftedMoment::Frob4 => 2.0 * pow4_s4(c) * pow4_s4(d) + cf2 * cf2 * df2 * df2,
    })
}

/// Eigenvalues of `K₁₁⁻¹` after checking invertibility.
fn inverse_spectrum(k11: &Matrix) -> Result<Vec<f64>> {
    let e = eig_sym(k11)?;
    let top = e.values.first().copied().unwrap_or(0.0);
    let min = e.values.last().copied().unwrap_or(0.0);
    let threshold = K11_SINGULAR_RTOL * top;
    if !(top > 0.0 && min > threshold) {
        return Err(Error::SingularK11 { min_eig: min, threshold });
    }
    Ok(e.values.iter().map(|v| 1.0 / v).collect())
}

pub fn pinv_wishart_moment(which: WishartMoment, k11: &Matrix, p: usize, b: Option<&Matrix>) -> Result<f64> {
    let k = k11.nrows();
    let inv = inverse_spectrum(k11)?;
    let tr: f64 = inv.iter().sum();
    let fro2: f64 = inv.iter().map(|v| v * v).sum();
    let op = inv.iter().copied().fold(0.0, f64::max);
    let pf = p as f64;
    match which {
        WishartMoment::Frob2WithB => {
            if p < 2 {
                return Err(Error::InvalidOversampling { p, min: 2 });
            }
            let b = b.ok_or_else(|| Error::InvalidArgument("this moment needs B".into()))?;
            if b.nrows() != k {
                return Err(Error::ShapeMismatch(format!("B has {} rows, K11 is {k}x{k}", b.nrows())));
            }
            let kinv = k11.clone().cholesky().ok_or(Error::SingularK11 { min_eig: 0.0, threshold: 0.0 })?;
            Ok((b.transpose() * kinv.solve(b)).trace() / (pf - 1.0))
        }
        WishartMoment::Spectral2Ub => {
            if p < 2 {
                return Err(Error::InvalidOversampling { p, min: 2 });
            }
            if k < 2 {
                return Err(Error::InvalidRank { k, min: 2 });
            }
            Ok(E * E * (k as f64 + pf) / ((pf - 1.0) * (pf + 1.0)) * op)
        }
        WishartMoment::Schatten4Pow4 | WishartMoment::Frob4 => {
            if p < 4 {
                return Err(Error::InvalidOversampling { p, min: 4 });
            }
            let denom = pf * (pf - 1.0) * (pf - 3.0);
            Ok(if which == WishartMoment::Schatten4Pow4 {
                ((pf - 1.0) * fro2 + tr * tr) / denom
            } else {
                ((pf - 2.0) * tr * tr + 2.0 * fro2) / denom
            })
        }
    }
}

/// `(threshold, probability)`: `P{‖Ω₁⁺‖ > threshold} ≤ probability`.
pub fn pinv_tail_bound(which: PinvTail, k11: &Matrix, p: usize, t: f64) -> Result<(f64, f64)> {
    if p < 4 {
        return Err(Error::InvalidOversampling { p, min: 4 });
    }
    if !(t >= 1.0) {
        return Err(Error::InvalidArgument(format!("need t >= 1, got {t}")));
    }
    let k = k11.nrows() as f64;
    let inv = inverse_spectrum(k11)?;
    let pf = p as f64;
    Ok(match which {
        PinvTail::Frob => ((3.0 * inv.iter().sum::<f64>() / (pf + 1.0)).sqrt() * t, t.powf(-pf)),
        PinvTail::Spectral | PinvTail::Schatten4 => {
            let scale = if which == PinvTail::Spectral {
                inv.iter().copied().fold(0.0, f64::max)
            } else {
                inv.iter().map(|v| v * v).sum::<f64>().sqrt()
            };
            (E * ((k + pf) * scale).sqrt() / (pf + 1.0) * t, t.powf(-(pf + 1.0)))
        }
    })
}

/// A formula instance with everything needed to evaluate and simulate it.
#[derive(Debug, Clone)]
pub enum Formula {
    Shifted { which: ShiftedMoment, b: Option<Matrix>, c: Matrix, d: Matrix },
    Wishart { which: WishartMoment, k11: Matrix, p: usize, b: Option<Matrix> },
    PinvTail { which: PinvTail, k11: Matrix, p: usize, t: f64 },
    /// `P{‖B + CΨD‖₍ₛ₎ ≥ E‖·‖₍ₛ₎ + ‖C‖₂‖D‖₂u} ≤ e^{−u²/2}`, mean estimated from the same draws.
    Concentration { b: Matrix, c: Matrix, d: Matrix, s: f64, u: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormulaKind {
    Equality,
    Inequality,
    Tail,
}

impl Formula {
    pub fn kind(&self) -> FormulaKind {
        match self {
            Formula::Shifted { which: ShiftedMoment::Spectral2Ub, .. }
            | Formula::Wishart { which: WishartMoment::Spectral2Ub, .. } => FormulaKind::Inequality,
            Formula::Shifted { .. } | Formula::Wishart { .. } => FormulaKind::Equality,
            Formula::PinvTail { .. } | Formula::Concentration { .. } => FormulaKind::Tail,
        }
    }

    /// Closed-form value: a moment, a moment bound, or a probability bound.
    pub fn closed_form(&self) -> Result<f64> {
        match self {
            Formula::Shifted { which, b, c, d } => shifted_gaussian_moment(*which, b.as_ref(), c, d),
            Formula::Wishart { which, k11, p, b } => pinv_wishart_moment(*which, k11, *p, b.as_ref()),
            Formula::PinvTail { which, k11, p, t } => Ok(pinv_tail_bound(*which, k11, *p, *t)?.1),
            Formula::Concentration { u, s, .. } => {
                if *s < 2.0 {
                    return Err(Error::InvalidArgument(format!("concentration needs s >= 2, got {s}")));
                }
                Ok((-u * u / 2.0).exp())
            }
        }
    }

    pub fn min_trials(&self) -> usize {
        match self.kind() {
            FormulaKind::Equality => MIN_EQUALITY_TRIALS,
            _ => MIN_INEQUALITY_TRIALS,
        }
    }
}

/// Closed form against its Monte Carlo estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub formula: String,
    pub kind: FormulaKind,
    pub closed_form: f64,
    pub mc_estimate: f64,
    pub mc_stderr: f64,
    pub trials: usize,
    pub pass: bool,
}

impl fmt::Display for MomentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{:e},{:e},{:e},{},{}",
            self.formula, self.closed_form, self.mc_estimate, self.mc_stderr, self.trials, self.pass
        )
    }
}

/// Spectrum of `W = Ω₁Ω₁ᵀ` for one draw, with its eigenvectors.
fn wishart_draw<R: Rng>(root: &Matrix, cols: usize, rng: &mut R) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let x = fill_normal(root.ncols(), cols, rng);
    let om = root * x;
    SymmetricEigen::new(symmetrize(&(&om * om.transpose())))
}

fn wilson(successes: usize, n: usize, z: f64) -> (f64, f64) {
    let nf = n as f64;
    let ph = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (ph + z2 / (2.0 * nf)) / denom;
    let half = z * (ph * (1.0 - ph) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    (center, half)
}

/// Runs `trials` draws of `formula`; draw `j` uses stream `j` of `seed`.
///
/// Equalities pass when the estimate is within 5 standard errors of the
/// closed form. Moment inequalities pass when the estimate minus 3 standard
/// errors is at most the bound. Tail statements pass when the lower end of
/// the 3-sigma Wilson interval for the exceedance rate is at most the
/// probability bound; the reported stderr is the Wilson half-width over 3.
pub fn mc_validate(name: &str, formula: &Formula, trials: usize, seed: u64) -> Result<MomentReport> {
    let min = formula.min_trials();
    if trials < min {
        return Err(Error::InvalidTrials { trials, min });
    }
    let closed = formula.closed_form()?;
    let kind = formula.kind();
    let values: Vec<f64> = match formula {
        Formula::Shifted { which, b, c, d } => {
            let (m2, n1) = (c.ncols(), d.nrows());
            par::map_indexed(trials, |j| {
                let mut rng = stream_rng(seed, j as u64);
                let psi = fill_normal(m2, n1, &mut rng);
                let mut m = c * psi * d;
                match which {
                    ShiftedMoment::Frob2 => {
                        if let Some(b) = b {
                            m += b;
                        }
                        m.norm_squared()
                    }
                    ShiftedMoment::Schatten4Pow4 => pow4_s4(&m),
                    ShiftedMoment::Spectral2Ub => schatten_norm(&m, SchattenNorm::Operator).powi(2),
                    ShiftedMoment::Frob4 => m.norm_squared().powi(2),
                }
            })
        }
        Formula::Wishart { which, k11, p, b } => {
            let root = psd_sqrt(&SpsdMatrix::new(k11.clone())?)?.into_matrix();
            let cols = k11.nrows() + p;
            par::map_indexed(trials, |j| {
                let mut rng = stream_rng(seed, j as u64);
                let w = wishart_draw(&root, cols, &mut rng);
                let inv = w.eigenvalues.map(|v| 1.0 / v);
                match which {
                    WishartMoment::Frob2WithB => {
                        let proj = w.eigenvectors.transpose() * b.as_ref().expect("checked by closed_form");
                        proj.row_iter().zip(inv.iter()).map(|(r, l)| r.norm_squared() * l).sum()
                    }
                    WishartMoment::Spectral2Ub => inv.max(),
                    WishartMoment::Schatten4Pow4 => inv.map(|v| v * v).sum(),
                    WishartMoment::Frob4 => inv.sum().powi(2),
                }
            })
        }
        Formula::PinvTail { which, k11, p, t } => {
            let threshold = pinv_tail_bound(*which, k11, *p, *t)?.0;
            let root = psd_sqrt(&SpsdMatrix::new(k11.clone())?)?.into_matrix();
            let cols = k11.nrows() + p;
            par::map_indexed(trials, |j| {
                let mut rng = stream_rng(seed, j as u64);
                let inv = wishart_draw(&root, cols, &mut rng).eigenvalues.map(|v| 1.0 / v);
                let norm = match which {
                    PinvTail::Frob => inv.sum().sqrt(),
                    PinvTail::Spectral => inv.max().sqrt(),
                    PinvTail::Schatten4 => inv.map(|v| v * v).sum().sqrt().sqrt(),
                };
                f64::from(u8::from(norm > threshold))
            })
        }
        Formula::Concentration { b, c, d, s, u } => {
            let (m2, n1) = (c.ncols(), d.nrows());
            let xi = SchattenNorm::Schatten(*s).canonical();
            let h = par::map_indexed(trials, |j| {
                let mut rng = stream_rng(seed, j as u64);
                let psi = fill_normal(m2, n1, &mut rng);
                schatten_norm(&(b + c * psi * d), xi)
            });
            let mean = h.iter().sum::<f64>() / trials as f64;
            let lip = schatten_norm(c, SchattenNorm::Operator) * schatten_norm(d, SchattenNorm::Operator);
            let level = mean + lip * u;
            h.iter().map(|&v| f64::from(u8::from(v >= level))).collect()
        }
    };

    let (mean, stderr) = crate::bounds::validate::mean_stderr(values.iter().copied());
    let (mc_stderr, pass) = match kind {
        FormulaKind::Equality => (stderr, (closed - mean).abs() <= 5.0 * stderr),
        FormulaKind::Inequality => (stderr, mean - 3.0 * stderr <= closed),
        FormulaKind::Tail => {
            let hits = values.iter().filter(|&&v| v > 0.5).count();
            let (center, half) = wilson(hits, trials, 3.0);
            (half / 3.0, center - half <= closed)
        }
    };
    Ok(MomentReport {
        formula: name.to_string(),
        kind,
        closed_form: closed,
        mc_estimate: mean,
        mc_stderr,
        trials,
        pass,
    })
}

fn random_spd<R: Rng>(k: usize, rng: &mut R) -> Matrix {
    let g = fill_normal(k, k, rng);
    symmetrize(&(&g * g.transpose() / k as f64 + Matrix::identity(k, k) * 0.5))
}

/// The named formula instances checked by `validate-lemmas`: for each of
/// `configs` random shape configurations, every moment identity and
/// inequality, pseudoinverse tails at `t ∈ {1.25, 2}`, and concentration
/// at `s ∈ {2, 4}`, `u ∈ {1, 2}`.
///
/// The fourth-moment identities use `p ≥ 8` so the Monte Carlo estimator of
/// `E‖Ω₁⁺‖⁴` has finite variance.
pub fn lemma_suite(seed: u64, configs: usize) -> Vec<(String, Formula)> {
    let mut out = Vec::new();
    for cfg in 0..configs {
        let mut rng = stream_rng(seed ^ 0x9e37_79b9_7f4a_7c15, cfg as u64);
        let mut dim = |lo: usize, hi: usize| rng.random_range(lo..=hi);
        let (m1, m2, n1, n2) = (dim(1, 4), dim(1, 4), dim(1, 4), dim(1, 4));
        let k = dim(2, 4);
        let p_low = dim(5, 7);
        let p_high = dim(8, 12);
        let p_tail = dim(4, 8);
        let nb = dim(1, 3);
        let b = fill_normal(m1, n2, &mut rng);
        let c = fill_normal(m1, m2, &mut rng);
        let d = fill_normal(n1, n2, &mut rng);
        let k11 = random_spd(k, &mut rng);
        let bw = fill_normal(k, nb, &mut rng);

        let tag = |s: &str| format!("{s}#{cfg}");
        out.push((tag("shifted.frob2"), Formula::Shifted { which: ShiftedMoment::Frob2, b: Some(b.clone()), c: c.clone(), d: d.clone() }));
        for (name, which) in [
            ("shifted.schatten4_4", ShiftedMoment::Schatten4Pow4),
            ("shifted.frob4", ShiftedMoment::Frob4),
            ("shifted.spectral2_ub", ShiftedMoment::Spectral2Ub),
        ] {
            out.push((tag(name), Formula::Shifted { which, b: None, c: c.clone(), d: d.clone() }));
        }
        out.push((tag("wishart.frob2_with_b"), Formula::Wishart { which: WishartMoment::Frob2WithB, k11: k11.clone(), p: p_low, b: Some(bw) }));
        for (name, which) in [
            ("wishart.schatten4_4", WishartMoment::Schatten4Pow4),
            ("wishart.frob4", WishartMoment::Frob4),
            ("wishart.spectral2_ub", WishartMoment::Spectral2Ub),
        ] {
            out.push((tag(name), Formula::Wishart { which, k11: k11.clone(), p: p_high, b: None }));
        }
        for t in [1.25, 2.0] {
            for (name, which) in [("tail.frob", PinvTail::Frob), ("tail.spectral", PinvTail::Spectral), ("tail.schatten4", PinvTail::Schatten4)] {
                out.push((tag(&format!("{name}@t={t}")), Formula::PinvTail { which, k11: k11.clone(), p: p_tail, t }));
            }
        }
        for s in [2.0, 4.0] {
            for u in [1.0, 2.0] {
                out.push((
                    tag(&format!("concentration.s{s}@u={u}")),
                    Formula::Concentration { b: b.clone(), c: c.clone(), d: d.clone(), s, u },
                ));
            }
        }
    }
    out
}

/// Runs [`lemma_suite`] with `configs` configurations; formula `i` draws from `seed + i`.
pub fn run_lemma_suite(seed: u64, trials: usize, configs: usize) -> Result<Vec<MomentReport>> {
    lemma_suite(seed, configs)
        .iter()
        .enumerate()
        .map(|(i, (name, f))| mc_validate(name, f, trials, seed.wrapping_add(i as u64)))
        .collect()
}
