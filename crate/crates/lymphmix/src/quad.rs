//! Gauss–Hermite quadrature: rules from the Golub–Welsch eigenproblem and
//! adaptive (mode-centered, curvature-scaled) integration of log-integrands
//! in one and two dimensions.

use crate::error::{Error, Result};
use crate::stats::logsumexp;
use nalgebra::{DMatrix, SymmetricEigen};

const SQRT_PI: f64 = 1.7724538509055159;

/// Physicists' Gauss–Hermite rule: sum w_q f(x_q) approximates
/// the integral of exp(-x^2) f(x) over the real line.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds the n-point rule from the symmetric tridiagonal Jacobi matrix
    /// (off-diagonal entries sqrt(k/2)); eigenvalues are the nodes, weights
    /// come from the first eigenvector components.
    pub fn new(n: usize) -> Result<GaussHermite> {
        if n == 0 {
            return Err(Error::Numerical("Gauss-Hermite rule needs n >= 1".into()));
        }
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let b = (k as f64 / 2.0).sqrt();
            jac[(k, k - 1)] = b;
            jac[(k - 1, k)] = b;
        }
        let eig = SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let node = eig.eigenvalues[i];
                let v0 = eig.eigenvectors[(0, i)];
                (node, SQRT_PI * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(GaussHermite {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }
}

/// Quadrature configuration: nodes per dimension plus the prebuilt rule.
#[derive(Debug, Clone)]
pub struct QuadSettings {
    pub n_nodes: usize,
    pub rule: GaussHermite,
}

impl QuadSettings {
    pub fn new(n_nodes: usize) -> Result<QuadSettings> {
        Ok(QuadSettings {
            n_nodes,
            rule: GaussHermite::new(n_nodes)?,
        })
    }
}

impl Default for QuadSettings {
    fn default() -> Self {
        QuadSettings::new(20).expect("default rule")
    }
}

/// log of the integral of exp(log_f) over the real line, centered at `mode`
/// and scaled by the curvature `neg_hess` (= -d2 log_f / dx2 at the mode).
pub fn agh_1d(rule: &GaussHermite, log_f: impl Fn(f64) -> f64, mode: f64, neg_hess: f64) -> f64 {
    let s = if neg_hess > 0.0 && neg_hess.is_finite() {
        (1.0 / neg_hess).sqrt()
    } else {
        1.0
    };
    let root2s = std::f64::consts::SQRT_2 * s;
    let terms: Vec<f64> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&x, &w)| w.ln() + x * x + log_f(mode + root2s * x))
        .collect();
    logsumexp(&terms) + root2s.ln()
}

/// log of the double integral of exp(log_f) over the plane. `neg_hess` is
/// the negative Hessian of log_f at the mode; its inverse Cholesky factor
/// shapes the node grid.
pub fn agh_2d(
    rule: &GaussHermite,
    log_f: impl Fn(f64, f64) -> f64,
    mode: [f64; 2],
    neg_hess: [[f64; 2]; 2],
) -> Result<f64> {
    let det = neg_hess[0][0] * neg_hess[1][1] - neg_hess[0][1] * neg_hess[1][0];
    let (l11, l21, l22);
    if det > 0.0 && neg_hess[0][0] > 0.0 && det.is_finite() {
        // Cholesky of the inverse negative Hessian
        let inv = [
            [neg_hess[1][1] / det, -neg_hess[0][1] / det],
            [-neg_hess[0][1] / det, neg_hess[0][0] / det],
        ];
        l11 = inv[0][0].sqrt();
        l21 = inv[1][0] / l11;
        l22 = (inv[1][1] - l21 * l21).max(1e-300).sqrt();
    } else {
        return Err(Error::Numerical(format!(
            "2-D quadrature curvature not positive definite: {neg_hess:?}"
        )));
    }
    let root2 = std::f64::consts::SQRT_2;
    let mut terms = Vec::with_capacity(rule.nodes.len() * rule.nodes.len());
    for (&xq, &wq) in rule.nodes.iter().zip(&rule.weights) {
        for (&xr, &wr) in rule.nodes.iter().zip(&rule.weights) {
            let u = mode[0] + root2 * l11 * xq;
            let v = mode[1] + root2 * (l21 * xq + l22 * xr);
            terms.push(wq.ln() + wr.ln() + xq * xq + xr * xr + log_f(u, v));
        }
    }
    Ok(logsumexp(&terms) + (2.0 * l11 * l22).ln())
}

/// Newton ascent for a smooth concave 1-D log-density. Returns (mode,
/// negative second derivative at the mode) or None when iteration fails.
pub fn newton_mode_1d(
    grad: impl Fn(f64) -> f64,
    neg_hess: impl Fn(f64) -> f64,
    start: f64,
) -> Option<(f64, f64)> {
    let mut x = start;
    for _ in 0..100 {
        let g = grad(x);
        let h = neg_hess(x);
        if !(h > 0.0 && h.is_finite() && g.is_finite()) {
            return None;
        }
        let step = g / h;
        x += step.clamp(-10.0, 10.0);
        if step.abs() < 1e-12 {
            let h = neg_hess(x);
            if h > 0.0 && h.is_finite() {
                return Some((x, h));
            }
            return None;
        }
    }
    None
}

/// Newton ascent in two dimensions; returns the mode and the negative
/// Hessian there.
pub fn newton_mode_2d(
    grad: impl Fn([f64; 2]) -> [f64; 2],
    neg_hess: impl Fn([f64; 2]) -> [[f64; 2]; 2],
    start: [f64; 2],
) -> Option<([f64; 2], [[f64; 2]; 2])> {
    let mut x = start;
    for _ in 0..200 {
        let g = grad(x);
        let h = neg_hess(x);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        if !(det > 0.0 && h[0][0] > 0.0 && det.is_finite()) {
            return None;
        }
        // solve H step = g
        let s0 = (h[1][1] * g[0] - h[0][1] * g[1]) / det;
        let s1 = (h[0][0] * g[1] - h[1][0] * g[0]) / det;
        x[0] += s0.clamp(-10.0, 10.0);
        x[1] += s1.clamp(-10.0, 10.0);
        if s0.abs().max(s1.abs()) < 1e-12 {
            return Some((x, neg_hess(x)));
        }
    }
    None
}
