//! Rank-sweep experiments driven by a small `key = value` config file.
//!
//! ```text
//! # pretty kernel against three sketch covariances
//! kernel = pretty
//! covariance = sqexp:l=1; sqexp:l=0.1; sqexp:l=0.01
//! rule = gauss
//! n = 400
//! ranks = 5, 10, 20, 40, 60, 80, 100
//! p = 5
//! trials = 10
//! seed = 1
//! output = pretty.csv
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;

use crate::approx::{approx_errors, optimal_error, Algorithm};
use crate::bounds::{expected_bound, quality_factors, structural_bound};
use crate::kernels::{discretize, CovarianceChoice, Kernel, KernelId, KernelOperator, QuadratureRule};
use crate::linalg::{NormTriple, SchattenNorm};
use crate::rng::stream_rng;
use crate::sketch::{draw_sketch_stream, partition_covariance, CovarianceSpec, SketchDraw};
use crate::{par, Error, Result};

pub const CURVE_CSV_HEADER: &str = "k,trial,err_op_rel,err_F_rel,err_Tr_rel,optimal_Tr_rel,bound_Tr,bound_F,bound_op";

/// Rows re-checked against the per-draw structural bound after a sweep.
pub const STRUCTURAL_SPOT_CHECKS: usize = 10;

const KNOWN_KEYS: [&str; 12] =
    ["kernel", "dim", "covariance", "rule", "n", "ranks", "p", "trials", "seed", "norms", "output", "algo"];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kernel: KernelId,
    pub dim: usize,
    pub covariances: Vec<CovarianceChoice>,
    pub rule: QuadratureRule,
    /// Nodes per dimension.
    pub n: usize,
    pub ranks: Vec<usize>,
    pub p: usize,
    pub trials: usize,
    pub seed: u64,
    /// Norms whose bound columns are filled in; the others are written as NaN.
    pub norms: Vec<SchattenNorm>,
    pub output: PathBuf,
    pub algorithm: Algorithm,
}

impl ExperimentConfig {
    /// Parses config text. Relative output paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: idx + 1, msg: format!("expected 'key = value', got '{line}'") })?;
            let key = key.trim().to_ascii_lowercase();
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Parse { line: idx + 1, msg: format!("duplicate key '{key}'") });
            }
        }

        let unknown: Vec<&str> =
            entries.keys().map(String::as_str).filter(|k| !KNOWN_KEYS.contains(k)).collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        let missing: Vec<&str> = ["kernel", "covariance", "n", "ranks", "p", "trials", "output"]
            .into_iter()
            .filter(|k| !entries.contains_key(*k))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!("missing keys: {}", missing.join(", "))));
        }

        let mut bad: Vec<String> = Vec::new();
        let mut field = |key: &str, msg: String| bad.push(format!("{key} ({msg})"));
        let get = |key: &str| entries.get(key).map(String::as_str);

        let kernel = get("kernel").unwrap().parse::<KernelId>().map_err(|e| field("kernel", e.to_string())).ok();
        let dim = match get("dim").map(parse_usize).transpose() {
            Ok(d) => d.unwrap_or(1),
            Err(e) => {
                field("dim", e);
                1
            }
        };
        let covariances: Vec<CovarianceChoice> = get("covariance")
            .unwrap()
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .filter_map(|s| s.parse().map_err(|e: Error| field("covariance", e.to_string())).ok())
            .collect();
        let rule = get("rule")
            .map(str::parse::<QuadratureRule>)
            .transpose()
            .map_err(|e| field("rule", e.to_string()))
            .ok()
            .flatten()
            .unwrap_or_default();
        let n = parse_usize(get("n").unwrap()).map_err(|e| field("n", e)).unwrap_or(0);
        let ranks: Vec<usize> = get("ranks")
            .unwrap()
            .split([',', ' '])
            .filter(|s| !s.is_empty())
            .filter_map(|s| parse_usize(s).map_err(|e| field("ranks", e)).ok())
            .collect();
        let p = parse_usize(get("p").unwrap()).map_err(|e| field("p", e)).unwrap_or(0);
        let trials = parse_usize(get("trials").unwrap()).map_err(|e| field("trials", e)).unwrap_or(0);
        let seed = get("seed")
            .map(|s| s.parse::<u64>().map_err(|e| field("seed", e.to_string())).unwrap_or(0))
            .unwrap_or(0);
        let norms: Vec<SchattenNorm> = match get("norms") {
            None => SchattenNorm::BOUND_NORMS.to_vec(),
            Some(s) => s
                .split([',', ' '])
                .filter(|s| !s.is_empty())
                .filter_map(|s| match s.parse::<SchattenNorm>() {
                    Ok(xi) if SchattenNorm::BOUND_NORMS.contains(&xi) => Some(xi),
                    Ok(xi) => {
                        field("norms", format!("no bound column for {xi}"));
                        None
                    }
                    Err(e) => {
                        field("norms", e.to_string());
                        None
                    }
                })
                .collect(),
        };
        let output = base.join(get("output").unwrap());
        let algorithm = get("algo")
            .map(str::parse::<Algorithm>)
            .transpose()
            .map_err(|e| field("algo", e.to_string()))
            .ok()
            .flatten()
            .unwrap_or_default();

        if covariances.is_empty() {
            field("covariance", "no covariance given".into());
        }
        if ranks.is_empty() {
            field("ranks", "empty rank sweep".into());
        } else if ranks.windows(2).any(|w| w[0] >= w[1]) {
            field("ranks", "must be strictly increasing".into());
        } else if ranks[0] == 0 {
            field("ranks", "ranks must be positive".into());
        }
        if p == 0 {
            field("p", "oversampling must be at least 1".into());
        }
        if trials == 0 {
            field("trials", "need at least one trial".into());
        }
        if !(1..=2).contains(&dim) {
            field("dim", format!("dimension {dim} not in 1..=2"));
        }
        let grid_size = n.checked_pow(dim as u32).unwrap_or(usize::MAX);
        if let Some(&kmax) = ranks.last() {
            if kmax + p > grid_size {
                field("ranks", format!("k + p = {} exceeds grid size {grid_size}", kmax + p));
            }
        }

        if !bad.is_empty() {
            return Err(Error::Config(format!("invalid keys: {}", bad.join("; "))));
        }
        Ok(ExperimentConfig {
            kernel: kernel.expect("validated"),
            dim,
            covariances,
            rule,
            n,
            ranks,
            p,
            trials,
            seed,
            norms,
            output,
            algorithm,
        })
    }

    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    /// CSV path for covariance number `i`: the configured path for a single
    /// covariance, `<stem>.<slug>.csv` beside it otherwise.
    pub fn output_path(&self, i: usize) -> PathBuf {
        if self.covariances.len() == 1 {
            return self.output.clone();
        }
        let stem = self.output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        self.output.with_file_name(format!("{stem}.{}.csv", self.covariances[i].slug()))
    }
}

fn parse_usize(s: &str) -> std::result::Result<usize, String> {
    s.trim().parse::<usize>().map_err(|_| format!("'{}' is not a non-negative integer", s.trim()))
}

/// One approximation draw at one rank. Errors are relative to `‖A‖_ξ`;
/// bounds are the expectation bounds divided by the same norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub k: usize,
    pub trial: usize,
    pub err_op_rel: f64,
    pub err_f_rel: f64,
    pub err_tr_rel: f64,
    pub optimal_tr_rel: f64,
    pub bound_tr: f64,
    pub bound_f: f64,
    pub bound_op: f64,
}

impl fmt::Display for CurveRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.k,
            self.trial,
            self.err_op_rel,
            self.err_f_rel,
            self.err_tr_rel,
            self.optimal_tr_rel,
            self.bound_tr,
            self.bound_f,
            self.bound_op
        )
    }
}

/// Structural-bound violation found by the spot check.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralViolation {
    pub k: usize,
    pub trial: usize,
    pub norm: SchattenNorm,
    pub error: f64,
    pub bound: f64,
}

impl fmt::Display for StructuralViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "structural bound violated at k={}, trial={} in the {} norm: error {:e} > bound {:e}",
            self.k, self.trial, self.norm, self.error, self.bound
        )
    }
}

/// Rows of one sweep, sorted by `(k, trial)`.
#[derive(Debug, Clone)]
pub struct Curve {
    pub covariance: CovarianceChoice,
    pub rows: Vec<CurveRow>,
    pub violations: Vec<StructuralViolation>,
}

impl Curve {
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(CURVE_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s
    }
}

/// Per-rank expectation bounds relative to `‖A‖_ξ`: `inf` when `K̃₁₁` is
/// singular, NaN when the bound's hypotheses on `k, p` fail or the norm
/// was not requested.
fn relative_bounds(
    op: &KernelOperator,
    cov: &CovarianceSpec,
    k: usize,
    p: usize,
    norms: &[SchattenNorm],
    a_norms: &NormTriple,
) -> Result<NormTriple> {
    let e = op.a.eig()?;
    let tail = NormTriple::from_values(e.values[k..].iter().map(|v| v.max(0.0)));
    let qf = match partition_covariance(cov, e, k).and_then(|pc| quality_factors(&pc, &e.values[k..])) {
        Ok(qf) => qf,
        Err(Error::SingularK11 { .. }) => return Ok(NormTriple { op: f64::INFINITY, frob: f64::INFINITY, nuc: f64::INFINITY }),
        Err(Error::ZeroTail) => return Ok(NormTriple::default()),
        Err(e) => return Err(e),
    };
    let one = |xi: SchattenNorm| -> Result<f64> {
        if !norms.contains(&xi) {
            return Ok(f64::NAN);
        }
        match expected_bound(xi, &qf, p, &tail) {
            Ok(b) => Ok(b / a_norms.get(xi)),
            Err(Error::InvalidRank { .. } | Error::InvalidOversampling { .. }) => Ok(f64::NAN),
            Err(e) => Err(e),
        }
    };
    Ok(NormTriple {
        op: one(SchattenNorm::Operator)?,
        frob: one(SchattenNorm::Frobenius)?,
        nuc: one(SchattenNorm::Nuclear)?,
    })
}

fn stream_id(k_index: usize, trial: usize) -> u64 {
    ((k_index as u64) << 32) | trial as u64
}

/// Runs the sweep for one covariance on an already discretized operator.
pub fn run_curve(
    cfg: &ExperimentConfig,
    op: &KernelOperator,
    covariance: &CovarianceChoice,
) -> Result<Curve> {
    let cov = covariance.build(&op.grid)?;
    let a = &op.a;
    let e = a.eig()?;
    let a_norms = NormTriple::from_values(e.values.iter().copied());

    let bounds = cfg
        .ranks
        .iter()
        .map(|&k| relative_bounds(op, &cov, k, cfg.p, &cfg.norms, &a_norms))
        .collect::<Result<Vec<_>>>()?;
    let optimal = cfg
        .ranks
        .iter()
        .map(|&k| Ok(optimal_error(a, k, SchattenNorm::Nuclear)? / a_norms.nuc))
        .collect::<Result<Vec<_>>>()?;

    let jobs = cfg.ranks.len() * cfg.trials;
    let rows = par::map_indexed(jobs, |j| {
        let (ki, trial) = (j / cfg.trials, j % cfg.trials);
        let k = cfg.ranks[ki];
        let omega = draw_sketch_stream(&cov, k + cfg.p, cfg.seed, stream_id(ki, trial));
        let f = cfg.algorithm.run(a, &omega)?;
        let err = approx_errors(a, &f)?;
        let b = bounds[ki];
        Ok(CurveRow {
            k,
            trial,
            err_op_rel: err.op / a_norms.op,
            err_f_rel: err.frob / a_norms.frob,
            err_tr_rel: err.nuc / a_norms.nuc,
            optimal_tr_rel: optimal[ki],
            bound_tr: b.nuc,
            bound_f: b.frob,
            bound_op: b.op,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    // a singular K̃₁₁ leaves Ω₁ rank deficient, outside the structural bound's hypothesis
    let full_rank: Vec<bool> =
        bounds.iter().map(|b| !(b.op.is_infinite() || b.frob.is_infinite() || b.nuc.is_infinite())).collect();
    let violations = structural_spot_check(cfg, a, &cov, &rows, &full_rank, &a_norms)?;
    Ok(Curve { covariance: covariance.clone(), rows, violations })
}

/// Recomputes the sketches of up to [`STRUCTURAL_SPOT_CHECKS`] rows and
/// compares each stored error with the structural bound of that draw. Ranks
/// flagged in `full_rank` as singular are not checked.
fn structural_spot_check(
    cfg: &ExperimentConfig,
    a: &crate::SpsdMatrix,
    cov: &CovarianceSpec,
    rows: &[CurveRow],
    full_rank: &[bool],
    a_norms: &NormTriple,
) -> Result<Vec<StructuralViolation>> {
    let e = a.eig()?;
    let mut rng = stream_rng(cfg.seed, u64::MAX);
    let mut picked: Vec<usize> = sample(&mut rng, rows.len(), STRUCTURAL_SPOT_CHECKS.min(rows.len())).into_vec();
    picked.sort_unstable();
    let mut out = Vec::new();
    for j in picked {
        let row = rows[j];
        let ki = j / cfg.trials;
        if row.k >= a.dim() || !full_rank[ki] {
            continue;
        }
        let omega = draw_sketch_stream(cov, row.k + cfg.p, cfg.seed, stream_id(ki, row.trial));
        let draw = SketchDraw::split(omega, e, row.k, cfg.seed);
        let bound = match structural_bound(&e.values[row.k..], &draw.omega1, &draw.omega2) {
            Ok(b) => b,
            Err(_) => continue,
        };
        for (xi, err) in [
            (SchattenNorm::Operator, row.err_op_rel),
            (SchattenNorm::Frobenius, row.err_f_rel),
            (SchattenNorm::Nuclear, row.err_tr_rel),
        ] {
            let scale = a_norms.get(xi);
            let (abs_err, b) = (err * scale, bound.get(xi));
            if abs_err > b + 1e-8 * scale {
                out.push(StructuralViolation { k: row.k, trial: row.trial, norm: xi, error: abs_err, bound: b });
            }
        }
    }
    Ok(out)
}

/// Discretizes the target once and runs every configured covariance.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<Curve>> {
    let kernel = Kernel::new(cfg.kernel.clone(), cfg.dim)?;
    let op = discretize(&kernel, cfg.rule, cfg.n)?;
    cfg.covariances.iter().map(|c| run_curve(cfg, &op, c)).collect()
}

/// Runs the experiment and writes one CSV per covariance. Returns the paths
/// written alongside the curves.
pub fn write_experiment(cfg: &ExperimentConfig) -> Result<Vec<(PathBuf, Curve)>> {
    let curves = run_experiment(cfg)?;
    let mut out = Vec::with_capacity(curves.len());
    for (i, curve) in curves.into_iter().enumerate() {
        let path = cfg.output_path(i);
        std::fs::write(&path, curve.to_csv()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        out.push((path, curve));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "\
# comment line
kernel = matern:nu=2.5
covariance = identity   # trailing comment
rule = gauss
n = 40
ranks = 4, 8
p = 4
trials = 3
seed = 9
output = out.csv
";

    #[test]
    fn parses_basic_config() {
        let c = ExperimentConfig::parse(BASIC, Path::new("/tmp/x")).unwrap();
        assert_eq!(c.kernel, KernelId::Matern52);
        assert_eq!(c.covariances, vec![CovarianceChoice::Identity]);
        assert_eq!(c.ranks, vec![4, 8]);
        assert_eq!((c.n, c.p, c.trials, c.seed, c.dim), (40, 4, 3, 9, 1));
        assert_eq!(c.output, PathBuf::from("/tmp/x/out.csv"));
        assert_eq!(c.algorithm, Algorithm::Stabilized);
        assert_eq!(c.norms, SchattenNorm::BOUND_NORMS.to_vec());
    }

    #[test]
    fn unknown_keys_are_listed() {
        let text = format!("{BASIC}colour = red\nshape = round\n");
        let err = ExperimentConfig::parse(&text, Path::new(".")).unwrap_err();
        assert_eq!(err, Error::Config("unknown keys: colour, shape".into()));
    }

    #[test]
    fn invalid_values_name_their_keys() {
        let text = BASIC.replace("ranks = 4, 8", "ranks = 8, 4").replace("p = 4", "p = 0");
        let Error::Config(msg) = ExperimentConfig::parse(&text, Path::new(".")).unwrap_err() else {
            panic!("expected a config error");
        };
        assert!(msg.contains("ranks") && msg.contains("p ("), "{msg}");

        let text = BASIC.replace("ranks = 4, 8", "ranks = 4, 38");
        let Error::Config(msg) = ExperimentConfig::parse(&text, Path::new(".")).unwrap_err() else {
            panic!("expected a config error");
        };
        assert!(msg.contains("exceeds grid size 40"), "{msg}");

        let text = BASIC.replace("n = 40\n", "");
        assert_eq!(ExperimentConfig::parse(&text, Path::new(".")).unwrap_err(), Error::Config("missing keys: n".into()));
        assert!(matches!(ExperimentConfig::parse("kernel pretty", Path::new(".")), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn multiple_covariances_get_slugged_paths() {
        let text = BASIC.replace("covariance = identity", "covariance = sqexp:l=1; matern32");
        let c = ExperimentConfig::parse(&text, Path::new("/d")).unwrap();
        assert_eq!(c.output_path(0), PathBuf::from("/d/out.sqexp_l_1.csv"));
        assert_eq!(c.output_path(1), PathBuf::from("/d/out.matern_nu_1.5.csv"));
    }

    #[test]
    fn rows_are_ordered_and_deterministic() {
        let c = ExperimentConfig::parse(BASIC, Path::new(".")).unwrap();
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a[0].to_csv(), b[0].to_csv());
        let keys: Vec<(usize, usize)> = a[0].rows.iter().map(|r| (r.k, r.trial)).collect();
        assert_eq!(keys, vec![(4, 0), (4, 1), (4, 2), (8, 0), (8, 1), (8, 2)]);
        assert!(a[0].violations.is_empty());
        for r in &a[0].rows {
            for v in [r.err_op_rel, r.err_f_rel, r.err_tr_rel, r.optimal_tr_rel] {
                assert!(v.is_finite() && v >= 0.0);
            }
            assert!(r.bound_tr >= r.optimal_tr_rel);
        }
        // p = 4 meets every hypothesis, so all bound columns are present
        assert!(a[0].rows.iter().all(|r| r.bound_f.is_finite() && r.bound_op.is_finite()));
    }

    #[test]
    fn unmet_hypotheses_give_nan_bounds() {
        let text = BASIC.replace("p = 4", "p = 2").replace("ranks = 4, 8", "ranks = 1, 4");
        let c = ExperimentConfig::parse(&text, Path::new(".")).unwrap();
        let rows = &run_experiment(&c).unwrap()[0].rows;
        // k = 1: no bound at all; k = 4, p = 2: op and Tr only
        assert!(rows[0].bound_tr.is_nan() && rows[0].bound_f.is_nan() && rows[0].bound_op.is_nan());
        let r = rows[c.trials];
        assert!(r.bound_tr.is_finite() && r.bound_op.is_finite() && r.bound_f.is_nan());
    }

    #[test]
    fn single_trial_single_rank_gives_one_row() {
        let text = BASIC.replace("ranks = 4, 8", "ranks = 5").replace("trials = 3", "trials = 1");
        let c = ExperimentConfig::parse(&text, Path::new(".")).unwrap();
        let csv = run_experiment(&c).unwrap()[0].to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().next().unwrap(), CURVE_CSV_HEADER);
    }
}
