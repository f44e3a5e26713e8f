//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::process::Command;
use std::time::Instant;

use nystromkit::approx::{approx_errors, randomized_svd, Algorithm};
use nystromkit::bounds::validate::{geometric_diagonal, run_bounds_suite, AuditCovariance, McProblem};
use nystromkit::bounds::{expected_bound, quality_factors, rsvd_expected_frob_bound, structural_bound, RsvdBound};
use nystromkit::experiment::{run_experiment, Curve, ExperimentConfig};
use nystromkit::gaussmoments::{run_lemma_suite, FormulaKind};
use nystromkit::gpsample::{coupled_mse, wasserstein_trace_check};
use nystromkit::kernels::{discretize, CovarianceChoice, Kernel, KernelId, QuadratureRule};
use nystromkit::linalg::{svd, sym_norm, NormTriple, SchattenNorm};
use nystromkit::rng::{normal_matrix, stream_rng};
use nystromkit::sketch::{draw_sketch_stream, partition_covariance, CovarianceSpec, SketchDraw};
use nystromkit::SpsdMatrix;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_spsd(n: usize, seed: u64, stream: u64) -> SpsdMatrix {
    let g = normal_matrix(n, n, seed, stream);
    SpsdMatrix::new(&g * g.transpose() / n as f64).unwrap()
}

/// `Q diag(e^{-ci}) Qᵀ` with random orthogonal `Q` and a decay rate `c` drawn per instance.
fn random_decaying(n: usize, seed: u64, stream: u64) -> SpsdMatrix {
    let mut rng = stream_rng(seed, stream);
    let rate: f64 = rng.random_range(0.05..1.5);
    let q = svd(&normal_matrix(n, n, seed, stream + 1)).unwrap().u;
    let d: Vec<f64> = (0..n).map(|i| (-rate * i as f64).exp()).collect();
    SpsdMatrix::from_eigen(d, q).unwrap()
}

fn c1_lemmas() -> Outcome {
    let t = Instant::now();
    let reports = run_lemma_suite(2024, 100_000, 5).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.formula.as_str()).collect();
    let eq = reports.iter().filter(|r| r.kind == FormulaKind::Equality).count();
    outcome(
        failed.is_empty() && secs <= 120.0,
        format!(
            "{}/{} formulas pass ({eq} equalities at 5 stderr), {secs:.1}s{}",
            reports.len() - failed.len(),
            reports.len(),
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(" ")) }
        ),
    )
}

fn c2_c3_bounds() -> (Outcome, Outcome) {
    let t = Instant::now();
    let a = geometric_diagonal(20);
    let (mut exp_fail, mut tail_fail, mut exp_n, mut tail_n) = (Vec::new(), Vec::new(), 0, 0);
    for kind in AuditCovariance::ALL {
        let cov = kind.build(20, 17).unwrap();
        let pb = McProblem::new(&a, &cov, 5, 5, 17);
        for row in run_bounds_suite(&pb, 2000, 5000, &[(2.0, 3.0), (3.0, 2.0)]).unwrap() {
            let tail = row.t.is_some();
            if tail {
                tail_n += 1;
            } else {
                exp_n += 1;
            }
            if !row.pass {
                let target = if tail { &mut tail_fail } else { &mut exp_fail };
                target.push(format!("{kind}/{}", row.norm));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    (
        outcome(exp_fail.is_empty(), format!("{}/{exp_n} mean errors within bound + 3 stderr {exp_fail:?}", exp_n - exp_fail.len())),
        outcome(
            tail_fail.is_empty() && secs <= 180.0,
            format!("{}/{tail_n} exceedance rates within prediction + 3 stderr {tail_fail:?}, {secs:.1}s for both", tail_n - tail_fail.len()),
        ),
    )
}

fn c4_structural() -> Outcome {
    let mut failures = 0;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..1000u64 {
        let mut rng = stream_rng(44, i);
        let n = rng.random_range(6..=30);
        let k = rng.random_range(1..=n - 2);
        let p = rng.random_range(1..=(n - k).min(6));
        let a = random_decaying(n, 44, 10 * i + 1000);
        let cov = CovarianceSpec::new(random_spsd(n, 44, 10 * i + 5000)).unwrap();
        let omega = draw_sketch_stream(&cov, k + p, 44, i);
        let e = a.eig().unwrap();
        let draw = SketchDraw::split(omega.clone(), e, k, 44);
        let bound = structural_bound(&e.values[k..], &draw.omega1, &draw.omega2).unwrap();
        let err = approx_errors(&a, &Algorithm::Stabilized.run(&a, &omega).unwrap()).unwrap();
        for xi in SchattenNorm::BOUND_NORMS {
            let excess = err.get(xi) - bound.get(xi);
            worst = worst.max(excess);
            if excess > 1e-8 {
                failures += 1;
            }
        }
    }
    outcome(failures == 0, format!("{failures} violations in 3000 checks, max excess {worst:.2e}"))
}

fn c5_exact_recovery() -> Outcome {
    let mut worst = 0.0_f64;
    for i in 0..100u64 {
        let mut rng = stream_rng(55, i);
        let n = rng.random_range(10..=40);
        let k = rng.random_range(1..=n / 2);
        let p = rng.random_range(1..=n / 2 - k / 2);
        let r = rng.random_range(1..=k + p);
        let g = normal_matrix(n, r, 55, 1000 + i);
        let a = SpsdMatrix::new(&g * g.transpose()).unwrap();
        let cov = CovarianceSpec::new(random_spsd(n, 55, 5000 + i)).unwrap();
        let omega = draw_sketch_stream(&cov, k + p, 55, i);
        let f = Algorithm::Stabilized.run(&a, &omega).unwrap();
        let err = approx_errors(&a, &f).unwrap().frob / a.matrix().norm();
        worst = worst.max(err);
    }
    outcome(worst <= 1e-8, format!("max relative Frobenius error {worst:.2e} over 100 instances"))
}

fn c6_ideal_covariance() -> Outcome {
    let (k, p, n) = (5, 5, 20);
    let mut worst_err = 0.0_f64;
    let mut worst_bound = 0.0_f64;
    for i in 0..20u64 {
        let a = random_decaying(n, 66, 10 * i);
        let e = a.eig().unwrap();
        let mut d = vec![0.0; n];
        d[..k].iter_mut().for_each(|v| *v = 1.0);
        let cov = CovarianceSpec::new(SpsdMatrix::from_eigen(d, e.vectors.clone()).unwrap()).unwrap();
        let tail = NormTriple::from_values(e.values[k..].iter().copied());
        let pc = partition_covariance(&cov, e, k).unwrap();
        let qf = quality_factors(&pc, &e.values[k..]).unwrap();
        let omega = draw_sketch_stream(&cov, k + p, 66, i);
        let err = approx_errors(&a, &Algorithm::Stabilized.run(&a, &omega).unwrap()).unwrap();
        for xi in SchattenNorm::BOUND_NORMS {
            let t = tail.get(xi);
            worst_err = worst_err.max((err.get(xi) - t).abs() / t);
            let b = expected_bound(xi, &qf, p, &tail).unwrap();
            worst_bound = worst_bound.max((b - t).abs() / t);
        }
    }
    outcome(
        worst_err <= 1e-8 && worst_bound <= 1e-8,
        format!("max |err - tail|/tail {worst_err:.2e}, max |bound - tail|/tail {worst_bound:.2e}"),
    )
}

fn c7_rsvd() -> Outcome {
    let mut worst = 0.0_f64;
    let mut order_fail = 0;
    for i in 0..50u64 {
        let mut rng = stream_rng(77, i);
        let n = rng.random_range(8..=20);
        let m = rng.random_range(n..=n + 10);
        let k = rng.random_range(2..=n / 2);
        let p = rng.random_range(2..=4);
        let b = normal_matrix(m, n, 77, 1000 + i);
        let cov = CovarianceSpec::new(random_spsd(n, 77, 5000 + i)).unwrap();
        let omega = draw_sketch_stream(&cov, k + p, 77, i);
        let r = randomized_svd(&b, &omega).unwrap();
        let btb = SpsdMatrix::new(b.transpose() * &b).unwrap();
        let f = Algorithm::Plain.run(&btb, &omega).unwrap();
        let resid = btb.matrix() - f.to_dense();
        for (s, xi) in [
            (1.0, SchattenNorm::Nuclear),
            (2.0, SchattenNorm::Frobenius),
            (f64::INFINITY, SchattenNorm::Operator),
        ] {
            let lhs = r.error(&b, SchattenNorm::Schatten(2.0 * s).canonical()).powi(2);
            let rhs = sym_norm(&resid, xi).unwrap();
            worst = worst.max((lhs - rhs).abs() / lhs.max(rhs));
        }
        let f = svd(&b).unwrap();
        let ours = rsvd_expected_frob_bound(RsvdBound::Ours, &f.values, &cov, &f.v, k, p).unwrap();
        let prior = rsvd_expected_frob_bound(RsvdBound::Prior, &f.values, &cov, &f.v, k, p).unwrap();
        if ours > prior * (1.0 + 1e-12) {
            order_fail += 1;
        }
    }
    outcome(
        worst <= 1e-7 && order_fail == 0,
        format!("max relative mismatch {worst:.2e}; ours > prior on {order_fail}/50"),
    )
}

fn c8_stabilized_plain() -> Outcome {
    let mut worst = 0.0_f64;
    for i in 0..50u64 {
        let mut rng = stream_rng(88, i);
        let n = rng.random_range(10..=40);
        let k = rng.random_range(2..=n / 3);
        let p = rng.random_range(2..=5);
        let q = svd(&normal_matrix(n, n, 88, 1000 + i)).unwrap().u;
        let d: Vec<f64> = (0..n).map(|j| 1.0 + 9.0 * (n - j) as f64 / n as f64).collect();
        let a = SpsdMatrix::from_eigen(d, q).unwrap();
        let omega = normal_matrix(n, k + p, 88, i);
        let plain = approx_errors(&a, &Algorithm::Plain.run(&a, &omega).unwrap()).unwrap();
        let stab = approx_errors(&a, &Algorithm::Stabilized.run(&a, &omega).unwrap()).unwrap();
        for xi in SchattenNorm::BOUND_NORMS {
            worst = worst.max((plain.get(xi) - stab.get(xi)).abs() / plain.get(xi));
        }
    }
    outcome(worst <= 1e-6, format!("max relative difference of errors {worst:.2e} over 50 instances"))
}

fn sweep(kernel: KernelId, covs: &[&str], ranks: &[usize], trials: usize, seed: u64) -> Vec<Curve> {
    let cfg = ExperimentConfig {
        kernel,
        dim: 1,
        covariances: covs.iter().map(|c| c.parse().unwrap()).collect(),
        rule: QuadratureRule::GaussLegendre,
        n: 400,
        ranks: ranks.to_vec(),
        p: 5,
        trials,
        seed,
        norms: SchattenNorm::BOUND_NORMS.to_vec(),
        output: "unused.csv".into(),
        algorithm: Algorithm::Stabilized,
    };
    run_experiment(&cfg).unwrap()
}

/// Mean trace-norm error and optimal error at rank `k`.
fn mean_at(curve: &Curve, k: usize) -> (f64, f64) {
    let rows: Vec<_> = curve.rows.iter().filter(|r| r.k == k).collect();
    let mean = rows.iter().map(|r| r.err_tr_rel).sum::<f64>() / rows.len() as f64;
    (mean, rows[0].optimal_tr_rel)
}

fn c9_pretty() -> Outcome {
    let t = Instant::now();
    let curves = sweep(KernelId::Pretty, &["sqexp:l=0.01", "sqexp:l=1"], &[100], 3, 9);
    let (narrow, _) = mean_at(&curves[0], 100);
    let (wide, opt) = mean_at(&curves[1], 100);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        narrow <= 0.1 * wide && wide > 10.0 * opt && secs <= 180.0,
        format!("k=100: err(l=0.01) {narrow:.2e}, err(l=1) {wide:.2e}, optimal {opt:.2e}, {secs:.1}s"),
    )
}

fn c10_matern() -> Outcome {
    let curves = sweep(KernelId::Matern52, &["matern:nu=1.5", "sqexp:l=1"], &[10, 20, 40], 10, 10);
    let mut parts = Vec::new();
    let mut pass = true;
    for k in [10, 20, 40] {
        let (e, opt) = mean_at(&curves[0], k);
        pass &= e <= 3.0 * opt;
        parts.push(format!("k={k} err/opt {:.2}", e / opt));
    }
    let (m32, _) = mean_at(&curves[0], 40);
    let (sq, _) = mean_at(&curves[1], 40);
    pass &= m32 <= sq;
    outcome(pass, format!("{}; k=40 matern32 {m32:.2e} vs sqexp(l=1) {sq:.2e}", parts.join(", ")))
}

fn c11_gp() -> Outcome {
    let op = discretize(&Kernel::new(KernelId::SquaredExp { ell: 0.4 }, 2).unwrap(), QuadratureRule::GaussLegendre, 32).unwrap();
    let cov: CovarianceChoice = "legproj:deg=25".parse().unwrap();
    let cov = cov.build(&op.grid).unwrap();
    let f = Algorithm::Stabilized.run(&op, &draw_sketch_stream(&cov, 30, 11, 0)).unwrap();
    let gap = wasserstein_trace_check(&op.a, &f).unwrap();
    let (mse, se) = coupled_mse(&op.a, &f, 10_000, 11).unwrap();
    outcome(
        gap.residual_psd && mse <= gap.gap + 3.0 * se,
        format!("E|w - w_hat|^2 = {mse:.4e} +- {se:.1e}, trace gap {:.4e} (residual PSD: {})", gap.gap, gap.residual_psd),
    )
}

fn c12_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "kernel = matern:nu=2.5\ncovariance = matern:nu=1.5; identity\nn = 120\nranks = 5, 10, 20\np = 5\ntrials = 6\nseed = 12\noutput = run.csv\n";
    std::fs::write(dir.path().join("exp.cfg"), cfg).unwrap();
    let files = ["run.matern_nu_1.5.csv", "run.identity.csv"];
    let run = |threads: &str| -> Vec<Vec<u8>> {
        let status = Command::new(env!("CARGO_BIN_EXE_nystromkit"))
            .arg("experiment")
            .arg(dir.path().join("exp.cfg"))
            .env("NYSTROMKIT_THREADS", threads)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        files.iter().map(|f| std::fs::read(dir.path().join(f)).unwrap()).collect()
    };
    let first = run("4");
    let second = run("4");
    let single = run("1");
    let same = first == second && first == single;
    outcome(same, format!("{} files, {} bytes, identical across repeats and thread counts: {same}", files.len(), first.iter().map(Vec::len).sum::<usize>()))
}

fn main() {
    // cargo passes test-harness flags; only `--list` needs a reply
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let (c2, c3) = c2_c3_bounds();
    let results: Vec<(usize, &str, Outcome)> = vec![
        (1, "Gaussian moment and Wishart formulas", c1_lemmas()),
        (2, "expectation bounds dominate sample means", c2),
        (3, "tail bounds dominate exceedance rates", c3),
        (4, "structural bound per draw", c4_structural()),
        (5, "exact recovery at rank <= k+p", c5_exact_recovery()),
        (6, "ideal covariance attains the optimal error", c6_ideal_covariance()),
        (7, "rSVD equivalence and bound ordering", c7_rsvd()),
        (8, "stabilized matches plain Nystrom", c8_stabilized_plain()),
        (9, "pretty kernel covariance ordering", c9_pretty()),
        (10, "Matern ordering", c10_matern()),
        (11, "GP sampling mean-squared error", c11_gp()),
        (12, "experiment CSV determinism", c12_determinism()),
    ];
    let mut failed = 0;
    for (id, name, o) in &results {
        println!("criterion {id:>2} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
