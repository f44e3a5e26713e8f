use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nystromkit::approx::{approx_errors, Algorithm, LowRankFactorization};
use nystromkit::bounds::validate::{
    geometric_diagonal, run_bounds_suite, AuditCovariance, McProblem, BOUNDS_CSV_HEADER,
};
use nystromkit::experiment::{write_experiment, ExperimentConfig};
use nystromkit::gaussmoments::{run_lemma_suite, LEMMAS_CSV_HEADER, MIN_EQUALITY_TRIALS};
use nystromkit::gpsample::{sample_gp, wasserstein_trace_check};
use nystromkit::kernels::{discretize, CovarianceChoice, Kernel, KernelId, KernelOperator, QuadratureRule};
use nystromkit::linalg::{read_matrix_file, write_matrix_file, NormTriple};
use nystromkit::sketch::{draw_sketch, CovarianceSpec};
use nystromkit::{par, Error, Matrix, SpsdMatrix};

const EXIT_VALIDATION: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "nystromkit", version, about = "Randomized Nyström approximation with correlated Gaussian sketches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Approximate one matrix or discretized kernel and write Û, σ̂.
    Approximate(ApproximateArgs),
    /// Run a rank sweep described by a config file.
    Experiment {
        config: PathBuf,
    },
    /// Monte Carlo check of the Gaussian moment and Wishart formulas.
    ValidateLemmas {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Random shape configurations per formula family.
        #[arg(long, default_value_t = 5)]
        configs: usize,
    },
    /// Monte Carlo audit of the expectation and tail bounds on diag(2^-i).
    ValidateBounds(ValidateBoundsArgs),
    /// Draw Gaussian process realizations from a Nyström factorization.
    SampleGp(SampleGpArgs),
}

#[derive(Args)]
struct GridArgs {
    /// Nodes per dimension.
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = QuadratureRule::GaussLegendre)]
    rule: QuadratureRule,
}

#[derive(Args)]
struct ApproximateArgs {
    /// Matrix text file holding the SPSD matrix.
    #[arg(long, conflicts_with = "kernel", required_unless_present = "kernel")]
    matrix: Option<PathBuf>,
    /// Kernel id, e.g. `sqexp:l=0.1`, `matern:nu=1.5`, `pretty`.
    #[arg(long)]
    kernel: Option<KernelId>,
    #[command(flatten)]
    grid: GridArgs,
    /// `identity`, a kernel id (kernel targets), or a matrix text file (matrix targets).
    #[arg(long, default_value = "identity")]
    cov: String,
    #[arg(short, long)]
    k: usize,
    #[arg(short, long)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = Algorithm::Stabilized)]
    algo: Algorithm,
    /// Writes PREFIX.U.txt and PREFIX.sigma.txt.
    #[arg(long, default_value = "nystrom")]
    out: String,
}

#[derive(Args)]
struct ValidateBoundsArgs {
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = AuditCovariance::Identity)]
    cov: AuditCovariance,
    #[arg(short, long, default_value_t = 5)]
    k: usize,
    #[arg(short, long, default_value_t = 5)]
    p: usize,
    #[arg(long, default_value_t = 2000)]
    expectation_trials: usize,
    #[arg(long, default_value_t = 5000)]
    tail_trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = Algorithm::Stabilized)]
    algo: Algorithm,
}

#[derive(Args)]
struct SampleGpArgs {
    #[arg(long, default_value = "sqexp:l=0.4")]
    kernel: KernelId,
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = QuadratureRule::GaussLegendre)]
    rule: QuadratureRule,
    #[arg(long, default_value = "legproj:deg=25")]
    cov: CovarianceChoice,
    /// Sketch size, and so the rank of the factorization.
    #[arg(short, long, default_value_t = 30)]
    r: usize,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Matrix text file for the samples (grid points × batch, weighted coordinates).
    #[arg(long, default_value = "samples.txt")]
    output: PathBuf,
    /// Optional CSV of function values, one row per sample.
    #[arg(long)]
    csv: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Validation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("NYSTROMKIT_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => {
                par::set_thread_limit(t);
            }
            _ => eprintln!("warning: ignoring NYSTROMKIT_THREADS={v}"),
        }
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Approximate(a) => cmd_approximate(a),
        Command::Experiment { config } => cmd_experiment(config),
        Command::ValidateLemmas { seed, trials, configs } => cmd_validate_lemmas(seed, trials, configs),
        Command::ValidateBounds(a) => cmd_validate_bounds(a),
        Command::SampleGp(a) => cmd_sample_gp(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

fn cmd_approximate(args: ApproximateArgs) -> CmdResult {
    if args.k == 0 || args.p == 0 {
        return Err(Failure::Usage("k and p must both be at least 1".into()));
    }
    let (a, cov): (SpsdMatrix, CovarianceSpec) = match (&args.matrix, &args.kernel) {
        (Some(path), _) => {
            let a = SpsdMatrix::new(read_matrix_file(path)?)?;
            let cov = if args.cov.trim().eq_ignore_ascii_case("identity") {
                CovarianceSpec::identity(a.dim())
            } else {
                CovarianceSpec::new(SpsdMatrix::new(read_matrix_file(&args.cov)?)?)?
            };
            (a, cov)
        }
        (None, Some(id)) => {
            let op = discretize_target(id, &args.grid)?;
            let cov = args.cov.parse::<CovarianceChoice>()?.build(&op.grid)?;
            (op.a, cov)
        }
        (None, None) => return Err(Failure::Usage("one of --matrix or --kernel is required".into())),
    };
    if cov.dim() != a.dim() {
        return Err(Failure::Usage(format!("covariance is {0}x{0}, matrix is {1}x{1}", cov.dim(), a.dim())));
    }
    if args.k + args.p > a.dim() {
        return Err(Failure::Usage(format!("k + p = {} exceeds dimension {}", args.k + args.p, a.dim())));
    }
    let omega = draw_sketch(&cov, args.k + args.p, args.seed);
    let f = args.algo.run(&a, &omega)?;
    write_matrix_file(format!("{}.U.txt", args.out), &f.u_hat)?;
    write_matrix_file(format!("{}.sigma.txt", args.out), &Matrix::from_column_slice(f.rank(), 1, &f.sigma_hat))?;

    let err = approx_errors(&a, &f)?;
    let norms = NormTriple::from_values(a.eig()?.values.iter().copied());
    let rel = |e: f64, n: f64| if n > 0.0 { e / n } else { e };
    println!("rank,err_Tr_rel,err_F_rel,err_op_rel,nu");
    println!(
        "{},{:e},{:e},{:e},{:e}",
        f.rank(),
        rel(err.nuc, norms.nuc),
        rel(err.frob, norms.frob),
        rel(err.op, norms.op),
        f.shift_nu
    );
    Ok(())
}

fn discretize_target(id: &KernelId, grid: &GridArgs) -> Result<KernelOperator, Error> {
    discretize(&Kernel::new(id.clone(), grid.dim)?, grid.rule, grid.n)
}

fn cmd_experiment(config: PathBuf) -> CmdResult {
    let cfg = ExperimentConfig::from_file(&config)?;
    let written = write_experiment(&cfg)?;
    for (path, curve) in &written {
        for v in &curve.violations {
            eprintln!("warning: {}: {v}", path.display());
        }
        println!("{} ({} rows)", path.display(), curve.rows.len());
    }
    Ok(())
}

fn cmd_validate_lemmas(seed: u64, trials: usize, configs: usize) -> CmdResult {
    if trials < MIN_EQUALITY_TRIALS {
        return Err(Failure::Usage(format!("--trials must be at least {MIN_EQUALITY_TRIALS}, got {trials}")));
    }
    if configs == 0 {
        return Err(Failure::Usage("--configs must be at least 1".into()));
    }
    let reports = run_lemma_suite(seed, trials, configs)?;
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(out, "{LEMMAS_CSV_HEADER}")?;
    for r in &reports {
        writeln!(out, "{r}")?;
    }
    out.flush()?;
    let failed = reports.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(Failure::Validation(format!("{failed} of {} formulas failed", reports.len())));
    }
    Ok(())
}

fn cmd_validate_bounds(args: ValidateBoundsArgs) -> CmdResult {
    let a = geometric_diagonal(args.n);
    let cov = args.cov.build(args.n, args.seed)?;
    let mut problem = McProblem::new(&a, &cov, args.k, args.p, args.seed);
    problem.algorithm = args.algo;
    let rows = run_bounds_suite(&problem, args.expectation_trials, args.tail_trials, &[(2.0, 3.0), (3.0, 2.0)])?;
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(out, "{BOUNDS_CSV_HEADER}")?;
    for r in &rows {
        writeln!(out, "{r}")?;
    }
    out.flush()?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(Failure::Validation(format!("{failed} of {} bound checks failed", rows.len())));
    }
    Ok(())
}

fn cmd_sample_gp(args: SampleGpArgs) -> CmdResult {
    let grid = GridArgs { n: args.n, dim: args.dim, rule: args.rule };
    let op = discretize_target(&args.kernel, &grid)?;
    if args.r > op.dim() {
        return Err(Failure::Usage(format!("r = {} exceeds grid size {}", args.r, op.dim())));
    }
    let f = if args.r == 0 {
        LowRankFactorization::zero(op.dim())
    } else {
        let cov = args.cov.build(&op.grid)?;
        Algorithm::Stabilized.run(&op, &draw_sketch(&cov, args.r, args.seed))?
    };
    let batch = sample_gp(&f, args.batch, args.seed)?;
    write_matrix_file(&args.output, &batch.samples)?;
    if let Some(path) = &args.csv {
        write_grid_csv(path, &batch.grid_values(&op.grid))?;
    }
    let gap = wasserstein_trace_check(&op.a, &f)?;
    if !gap.residual_psd {
        eprintln!("warning: residual is not PSD; trace gap is the absolute eigenvalue sum");
    }
    println!("rank,trace,trace_gap,residual_psd");
    println!("{},{:e},{:e},{}", f.rank(), op.a.trace(), gap.gap, gap.residual_psd);
    Ok(())
}

/// One row per sample, one column per grid point.
fn write_grid_csv(path: &PathBuf, values: &Matrix) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header: Vec<String> = (0..values.nrows()).map(|i| format!("x{i}")).collect();
    writeln!(w, "sample,{}", header.join(","))?;
    for (j, col) in values.column_iter().enumerate() {
        let cells: Vec<String> = col.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{j},{}", cells.join(","))?;
    }
    w.flush()
}
