//! Kernels on `[−1, 1]^d` (d ∈ {1, 2}) and their weighted quadrature
//! discretization `A_ij = √w_i G(x_i, x_j) √w_j`.
//!
//! In the weighted geometry Euclidean inner products approximate L² inner
//! products, so eigenvalues and Schatten norms of `A` approximate those of
//! the integral operator. A vector `v` in weighted coordinates corresponds
//! to grid values `v_i / √w_i`.

pub mod quadrature;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::approx::LinearOperator;
use crate::linalg::{SpsdMatrix, MAX_DIM};
use crate::sketch::CovarianceSpec;
use crate::{par, Error, Matrix, Result};
pub use quadrature::QuadratureRule;

/// Slack allowed when checking that points lie in `[−1, 1]`.
const DOMAIN_TOL: f64 = 1e-12;

pub type KernelFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum KernelId {
    SquaredExp { ell: f64 },
    Matern12,
    Matern32,
    Matern52,
    /// `1/(1 + 100(x² − y²)²)`, one-dimensional only.
    Pretty,
    /// Projection onto the tensor product of the first `degree` orthonormal
    /// Legendre polynomials in each coordinate.
    LegendreProj { degree: usize },
    Custom { name: String, f: KernelFn },
}

impl fmt::Debug for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl PartialEq for KernelId {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (KernelId::Custom { f: a, .. }, KernelId::Custom { f: b, .. }) => Arc::ptr_eq(a, b),
            (KernelId::Custom { .. }, _) | (_, KernelId::Custom { .. }) => false,
            _ => self.to_string() == other.to_string(),
        }
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelId::SquaredExp { ell } => write!(f, "sqexp:l={ell}"),
            KernelId::Matern12 => f.write_str("matern:nu=0.5"),
            KernelId::Matern32 => f.write_str("matern:nu=1.5"),
            KernelId::Matern52 => f.write_str("matern:nu=2.5"),
            KernelId::Pretty => f.write_str("pretty"),
            KernelId::LegendreProj { degree } => write!(f, "legproj:deg={degree}"),
            KernelId::Custom { name, .. } => write!(f, "custom:{name}"),
        }
    }
}

fn parse_param<'a>(spec: &'a str, rest: Option<&'a str>, keys: &[&str]) -> Result<&'a str> {
    let rest = rest.ok_or_else(|| Error::InvalidArgument(format!("kernel '{spec}' needs a parameter")))?;
    let (k, v) = rest
        .split_once('=')
        .ok_or_else(|| Error::InvalidArgument(format!("kernel '{spec}': expected key=value")))?;
    if !keys.contains(&k.trim()) {
        return Err(Error::InvalidArgument(format!(
            "kernel '{spec}': unknown parameter '{}', expected one of {keys:?}",
            k.trim()
        )));
    }
    Ok(v.trim())
}

impl FromStr for KernelId {
    type Err = Error;

    /// Parses `sqexp:l=0.1` (also `ℓ=`, `ell=`), `matern:nu=0.5|1.5|2.5`,
    /// `matern12|matern32|matern52`, `pretty`, `legproj:deg=25`.
    fn from_str(s: &str) -> Result<Self> {
        let spec = s.trim();
        let (name, rest) = match spec.split_once(':') {
            Some((n, r)) => (n.trim(), Some(r.trim())),
            None => (spec, None),
        };
        let bad = |msg: &str| Error::InvalidArgument(format!("kernel '{spec}': {msg}"));
        match name.to_ascii_lowercase().as_str() {
            "sqexp" | "se" | "squaredexp" => {
                let ell: f64 = parse_param(spec, rest, &["l", "ℓ", "ell"])?
                    .parse()
                    .map_err(|_| bad("length scale is not a number"))?;
                if !(ell > 0.0 && ell.is_finite()) {
                    return Err(bad("length scale must be positive"));
                }
                Ok(KernelId::SquaredExp { ell })
            }
            "matern" => match parse_param(spec, rest, &["nu", "ν"])? {
                "0.5" | "1/2" => Ok(KernelId::Matern12),
                "1.5" | "3/2" => Ok(KernelId::Matern32),
                "2.5" | "5/2" => Ok(KernelId::Matern52),
                _ => Err(bad("nu must be 0.5, 1.5 or 2.5")),
            },
            "matern12" => Ok(KernelId::Matern12),
            "matern32" => Ok(KernelId::Matern32),
            "matern52" => Ok(KernelId::Matern52),
            "pretty" => Ok(KernelId::Pretty),
            "legproj" | "legendre" => {
                let degree: usize = parse_param(spec, rest, &["deg", "degree"])?
                    .parse()
                    .map_err(|_| bad("degree is not a positive integer"))?;
                if degree == 0 {
                    return Err(bad("degree must be at least 1"));
                }
                Ok(KernelId::LegendreProj { degree })
            }
            _ => Err(bad("unknown kernel (sqexp, matern, pretty, legproj)")),
        }
    }
}

/// A kernel together with its spatial dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub id: KernelId,
    pub dim: usize,
}

impl Kernel {
    pub fn new(id: KernelId, dim: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidArgument(format!("dimension must be 1 or 2, got {dim}")));
        }
        if matches!(id, KernelId::Pretty) && dim != 1 {
            return Err(Error::InvalidArgument("the pretty kernel is one-dimensional".into()));
        }
        Ok(Kernel { id, dim })
    }

    pub fn custom(name: &str, dim: usize, f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Result<Self> {
        Kernel::new(KernelId::Custom { name: name.to_string(), f: Arc::new(f) }, dim)
    }

    /// Evaluation without domain checks; callers guarantee `x, y ∈ [−1,1]^d`.
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let r = || x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        match &self.id {
            KernelId::SquaredExp { ell } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * ell * ell)).exp()
            }
            KernelId::Matern12 => (-r()).exp(),
            KernelId::Matern32 => {
                let s = 3f64.sqrt() * r();
                (1.0 + s) * (-s).exp()
            }
            KernelId::Matern52 => {
                let r = r();
                let s = 5f64.sqrt() * r;
                (1.0 + s + 5.0 * r * r / 3.0) * (-s).exp()
            }
            KernelId::Pretty => {
                let q = x[0] * x[0] - y[0] * y[0];
                1.0 / (1.0 + 100.0 * q * q)
            }
            KernelId::LegendreProj { degree } => x
                .iter()
                .zip(y)
                .map(|(&a, &b)| {
                    let pa = quadrature::orthonormal_legendre(*degree, a);
                    let pb = quadrature::orthonormal_legendre(*degree, b);
                    pa.iter().zip(&pb).map(|(u, v)| u * v).sum::<f64>()
                })
                .product(),
            KernelId::Custom { f, .. } => f(x, y),
        }
    }
}

fn check_point(kernel: &Kernel, x: &[f64]) -> Result<()> {
    if x.len() != kernel.dim {
        return Err(Error::OutOfDomain(format!("point has {} coordinates, kernel is {}-D", x.len(), kernel.dim)));
    }
    if let Some(v) = x.iter().find(|v| !(v.abs() <= 1.0 + DOMAIN_TOL)) {
        return Err(Error::OutOfDomain(format!("coordinate {v} outside [-1, 1]")));
    }
    Ok(())
}

/// `G(x, y)` for `x, y ∈ [−1, 1]^d`.
pub fn eval_kernel(kernel: &Kernel, x: &[f64], y: &[f64]) -> Result<f64> {
    check_point(kernel, x)?;
    check_point(kernel, y)?;
    Ok(kernel.eval_unchecked(x, y))
}

/// Tensor-product quadrature grid on `[−1, 1]^d`; point `i·n + j` in 2-D is
/// `(t_i, t_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dim: usize,
    /// Flat coordinates, `dim` per point.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub rule: QuadratureRule,
    pub n_per_dim: usize,
}

impl Grid {
    pub fn new(rule: QuadratureRule, n: usize, dim: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidArgument(format!("dimension must be 1 or 2, got {dim}")));
        }
        let total = n.checked_pow(dim as u32).unwrap_or(usize::MAX);
        if total > MAX_DIM {
            return Err(Error::TooManyNodes { nodes: total, max: MAX_DIM });
        }
        let (x, w) = rule.nodes_weights(n)?;
        let (points, weights) = if dim == 1 {
            (x, w)
        } else {
            let mut pts = Vec::with_capacity(2 * total);
            let mut ws = Vec::with_capacity(total);
            for i in 0..n {
                for j in 0..n {
                    pts.extend([x[i], x[j]]);
                    ws.push(w[i] * w[j]);
                }
            }
            (pts, ws)
        };
        Ok(Grid { dim, points, weights, rule, n_per_dim: n })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn sqrt_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.sqrt()).collect()
    }

    /// Converts weighted coordinates (rows) to grid values.
    pub fn to_grid_values(&self, weighted: &Matrix) -> Matrix {
        let inv: Vec<f64> = self.weights.iter().map(|w| 1.0 / w.sqrt()).collect();
        crate::linalg::scale_rows(weighted, &inv)
    }

    /// `√W·M·√W` for a matrix of kernel values on the grid.
    fn weight(&self, g: &Matrix) -> Matrix {
        let sw = self.sqrt_weights();
        crate::linalg::scale_columns(&crate::linalg::scale_rows(g, &sw), &sw)
    }
}

/// A kernel discretized on a quadrature grid.
#[derive(Debug, Clone)]
pub struct KernelOperator {
    pub kernel: Kernel,
    pub grid: Grid,
    pub a: SpsdMatrix,
}

impl KernelOperator {
    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn matrix(&self) -> &Matrix {
        self.a.matrix()
    }

    /// Rank-`r` truncation of the eigen-expansion, in weighted coordinates.
    pub fn truncated(&self, r: usize) -> Result<SpsdMatrix> {
        let e = self.a.eig()?;
        mercer_truncation(&e.values, &e.vectors, r)
    }
}

impl LinearOperator for KernelOperator {
    fn dim(&self) -> usize {
        self.grid.len()
    }
    fn apply(&self, x: &Matrix) -> Matrix {
        self.a.matrix() * x
    }
}

/// Kernel values `G(x_i, x_j)` on a grid, symmetric by construction.
pub fn kernel_matrix(kernel: &Kernel, grid: &Grid) -> Result<Matrix> {
    if kernel.dim != grid.dim {
        return Err(Error::ShapeMismatch(format!("{}-D kernel on a {}-D grid", kernel.dim, grid.dim)));
    }
    let n = grid.len();
    let rows = par::map_indexed(n, |i| (i..n).map(|j| kernel.eval_unchecked(grid.point(i), grid.point(j))).collect::<Vec<f64>>());
    let mut g = Matrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            g[(i, i + off)] = v;
            g[(i + off, i)] = v;
        }
    }
    Ok(g)
}

/// `A_ij = √w_i G(x_i, x_j) √w_j` on an `n`-point-per-dimension tensor grid.
pub fn discretize(kernel: &Kernel, rule: QuadratureRule, n: usize) -> Result<KernelOperator> {
    let grid = Grid::new(rule, n, kernel.dim)?;
    if let KernelId::LegendreProj { degree } = kernel.id {
        return legendre_projection_on(degree, grid);
    }
    let a = SpsdMatrix::new_unverified(grid.weight(&kernel_matrix(kernel, &grid)?))?;
    Ok(KernelOperator { kernel: kernel.clone(), grid, a })
}

/// Orthonormal tensor-Legendre basis on the grid, scaled by `√w`: column
/// `(a, b)` in 2-D holds `√w_q p_a(x_q) p_b(y_q)`.
pub fn legendre_factor(degree: usize, grid: &Grid) -> Matrix {
    let sw = grid.sqrt_weights();
    let cols = degree.pow(grid.dim as u32);
    let mut f = Matrix::zeros(grid.len(), cols);
    for q in 0..grid.len() {
        let pt = grid.point(q);
        let px = quadrature::orthonormal_legendre(degree, pt[0]);
        if grid.dim == 1 {
            for a in 0..degree {
                f[(q, a)] = sw[q] * px[a];
            }
        } else {
            let py = quadrature::orthonormal_legendre(degree, pt[1]);
            for a in 0..degree {
                for b in 0..degree {
                    f[(q, a * degree + b)] = sw[q] * px[a] * py[b];
                }
            }
        }
    }
    f
}

fn legendre_projection_on(degree: usize, grid: Grid) -> Result<KernelOperator> {
    if degree == 0 {
        return Err(Error::InvalidArgument("Legendre degree must be at least 1".into()));
    }
    let f = legendre_factor(degree, &grid);
    let a = SpsdMatrix::new_unverified(&f * f.transpose())?;
    let kernel = Kernel::new(KernelId::LegendreProj { degree }, grid.dim)?;
    Ok(KernelOperator { kernel, grid, a })
}

/// Discretized projection kernel `Σ p_i(x)p_i(y)` over the tensor-Legendre
/// basis with `degree` polynomials per dimension.
pub fn legendre_projection_cov(degree: usize, dim: usize, rule: QuadratureRule, n: usize) -> Result<KernelOperator> {
    legendre_projection_on(degree, Grid::new(rule, n, dim)?)
}

/// `Σ_{i<r} λ_i v_i v_iᵀ` from eigenpairs sorted in descending order.
pub fn mercer_truncation(values: &[f64], vectors: &Matrix, r: usize) -> Result<SpsdMatrix> {
    if r > values.len() || values.len() != vectors.ncols() {
        return Err(Error::InvalidArgument(format!(
            "truncation rank {r} with {} eigenvalues and {} vectors",
            values.len(),
            vectors.ncols()
        )));
    }
    let v = vectors.columns(0, r).into_owned();
    SpsdMatrix::from_eigen(values[..r].to_vec(), v)
}

/// Choice of sketch covariance: white noise in the weighted geometry
/// (`K = I`) or a discretized kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceChoice {
    Identity,
    Kernel(KernelId),
}

impl FromStr for CovarianceChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "i" | "white" => Ok(CovarianceChoice::Identity),
            _ => Ok(CovarianceChoice::Kernel(s.parse()?)),
        }
    }
}

impl fmt::Display for CovarianceChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovarianceChoice::Identity => f.write_str("identity"),
            CovarianceChoice::Kernel(k) => write!(f, "{k}"),
        }
    }
}

impl CovarianceChoice {
    /// Sketch covariance on the same grid as the target operator.
    pub fn build(&self, grid: &Grid) -> Result<CovarianceSpec> {
        match self {
            CovarianceChoice::Identity => Ok(CovarianceSpec::identity(grid.len())),
            CovarianceChoice::Kernel(KernelId::LegendreProj { degree }) => {
                let op = legendre_projection_on(*degree, grid.clone())?;
                CovarianceSpec::new(op.a)
            }
            CovarianceChoice::Kernel(id) => {
                let k = Kernel::new(id.clone(), grid.dim)?;
                let a = SpsdMatrix::new_unverified(grid.weight(&kernel_matrix(&k, grid)?))?;
                CovarianceSpec::new(a)
            }
        }
    }

    /// Short name usable in file names.
    pub fn slug(&self) -> String {
        self.to_string()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' })
            .collect::<String>()
            .replace("._", "_")
    }
}
