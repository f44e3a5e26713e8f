//! One-dimensional quadrature rules on [−1, 1] and Legendre polynomials.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuadratureRule {
    #[default]
    GaussLegendre,
    Trapezoid,
}

impl QuadratureRule {
    /// Nodes (ascending) and weights of the `n`-point rule.
    pub fn nodes_weights(self, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if n < 3 {
            return Err(Error::InvalidArgument(format!("quadrature needs n >= 3 points, got {n}")));
        }
        Ok(match self {
            QuadratureRule::GaussLegendre => gauss_legendre(n),
            QuadratureRule::Trapezoid => trapezoid(n),
        })
    }
}

impl FromStr for QuadratureRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gauss" | "gauss-legendre" | "gausslegendre" | "legendre" => Ok(QuadratureRule::GaussLegendre),
            "trapezoid" | "trap" => Ok(QuadratureRule::Trapezoid),
            other => Err(Error::InvalidArgument(format!("unknown quadrature rule '{other}' (gauss|trapezoid)"))),
        }
    }
}

impl fmt::Display for QuadratureRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuadratureRule::GaussLegendre => "gauss",
            QuadratureRule::Trapezoid => "trapezoid",
        })
    }
}

/// Composite trapezoid rule with `n` equispaced nodes including both ends.
pub fn trapezoid(n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = 2.0 / (n - 1) as f64;
    let nodes = (0..n).map(|i| if i == n - 1 { 1.0 } else { -1.0 + i as f64 * h }).collect();
    let weights = (0..n).map(|i| if i == 0 || i == n - 1 { h / 2.0 } else { h }).collect();
    (nodes, weights)
}

/// `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 1..n {
        let jf = j as f64;
        let p2 = ((2.0 * jf + 1.0) * x * p1 - jf * p0) / (jf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss–Legendre nodes (ascending) and weights by Newton iteration from
/// Chebyshev-like initial guesses.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Values of the first `count` orthonormal Legendre polynomials
/// `p_j = sqrt((2j+1)/2)·P_j` at `x`.
pub fn orthonormal_legendre(count: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let (mut p0, mut p1) = (1.0, x);
    for j in 0..count {
        let pj = match j {
            0 => 1.0,
            1 => x,
            _ => {
                let jf = (j - 1) as f64;
                let p2 = ((2.0 * jf + 1.0) * x * p1 - jf * p0) / (jf + 1.0);
                p0 = p1;
                p1 = p2;
                p2
            }
        };
        out.push(((2 * j + 1) as f64 / 2.0).sqrt() * pj);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn trapezoid_three_points() {
        let (x, w) = trapezoid(3);
        assert_eq!(x, vec![-1.0, 0.0, 1.0]);
        assert_eq!(w, vec![0.5, 1.0, 0.5]);
    }

    #[test]
    fn gauss_three_points_closed_form() {
        let (x, w) = gauss_legendre(3);
        assert_relative_eq!(x[0], -(0.6f64).sqrt(), epsilon = 1e-15);
        assert_eq!(x[1], 0.0);
        assert_relative_eq!(w[0], 5.0 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(w[1], 8.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn gauss_is_exact_to_degree_2n_minus_1() {
        for n in [4usize, 7, 20, 64, 200] {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
            for deg in [2 * n - 2, 2 * n - 1] {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}: {q} vs {exact}");
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn legendre_basis_is_orthonormal() {
        let (x, w) = gauss_legendre(40);
        let vals: Vec<Vec<f64>> = x.iter().map(|&t| orthonormal_legendre(30, t)).collect();
        for i in 0..30 {
            for j in 0..30 {
                let ip: f64 = (0..40).map(|q| w[q] * vals[q][i] * vals[q][j]).sum();
                assert!((ip - f64::from(u8::from(i == j))).abs() < 1e-12, "({i},{j}) = {ip}");
            }
        }
    }

    #[test]
    fn rule_parsing() {
        assert_eq!("gauss".parse::<QuadratureRule>().unwrap(), QuadratureRule::GaussLegendre);
        assert_eq!("Trapezoid".parse::<QuadratureRule>().unwrap(), QuadratureRule::Trapezoid);
        assert!("simpson".parse::<QuadratureRule>().is_err());
        assert!(QuadratureRule::Trapezoid.nodes_weights(2).is_err());
    }
}
