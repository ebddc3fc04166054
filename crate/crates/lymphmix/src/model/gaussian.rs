//! Gaussian building blocks: iid normal log-likelihoods, the bivariate
//! normal latent density, and the closed-form collapse of nested random
//! intercepts.
//!
//! For one specimen the marginal covariance of its stacked observations is
//!   V = tau2 * 11' + blockdiag_j( fv_j * J + sigma2 * I ),
//! where fv_j is the field-level variance of field j (possibly scaled by a
//! delta multiplier) and J the all-ones matrix. Both the field blocks and
//! the rank-one specimen term invert analytically (Sherman–Morrison), so
//! the marginal log-likelihood needs only per-field residual sums.

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.8378770664093453;

/// Log density of N(x; mean, var).
#[inline]
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * (LN_2PI + var.ln() + r * r / var)
}

/// Log density of a bivariate normal with unit variances and correlation
/// `rho` at (x, y).
#[inline]
pub fn bvn_unit_logpdf(x: f64, y: f64, rho: f64) -> f64 {
    let om = 1.0 - rho * rho;
    -LN_2PI - 0.5 * om.ln() - (x * x - 2.0 * rho * x * y + y * y) / (2.0 * om)
}

/// Per-field residual summary entering the collapse. Residuals are the
/// observations minus all fixed-effect terms; specimen and field random
/// effects stay in the covariance.
#[derive(Debug, Clone, Copy)]
pub struct FieldBlock {
    pub n: usize,
    pub sum_r: f64,
    pub sum_r2: f64,
    /// Field-level random-effect variance for this block (0 when absent).
    pub field_var: f64,
}

/// Accumulated quantities for one specimen after integrating out the field
/// effects: log|D|, 1'D^{-1}1, 1'D^{-1}r, r'D^{-1}r, and the observation
/// count, with D the block-diagonal field covariance.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpecimenCollapse {
    pub logdet_d: f64,
    pub g11: f64,
    pub g1r: f64,
    pub grr: f64,
    pub m: usize,
}

impl SpecimenCollapse {
    pub fn accumulate(blocks: &[FieldBlock], sigma2: f64) -> Result<SpecimenCollapse> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Param(format!(
                "sigma2 must be positive, got {sigma2}"
            )));
        }
        // canonical block order: the accumulators then depend only on the
        // multiset of blocks, so field permutations cannot move a single ulp
        let mut blocks = blocks.to_vec();
        blocks.sort_by(|a, b| {
            a.n.cmp(&b.n)
                .then(a.field_var.total_cmp(&b.field_var))
                .then(a.sum_r.total_cmp(&b.sum_r))
                .then(a.sum_r2.total_cmp(&b.sum_r2))
        });
        let mut c = SpecimenCollapse::default();
        for b in &blocks {
            if b.field_var < 0.0 {
                return Err(Error::Param(format!(
                    "field variance must be nonnegative, got {}",
                    b.field_var
                )));
            }
            let n = b.n as f64;
            let s = sigma2 + n * b.field_var;
            c.logdet_d += (n - 1.0) * sigma2.ln() + s.ln();
            c.g11 += n / s;
            c.g1r += b.sum_r / s;
            c.grr += b.sum_r2 / sigma2 - b.field_var * b.sum_r * b.sum_r / (sigma2 * s);
            c.m += b.n;
        }
        Ok(c)
    }

    /// Marginal specimen log-likelihood after also integrating the specimen
    /// effect (coefficient 1 on every observation, variance `tau2 >= 0`).
    pub fn marginal_loglik(&self, tau2: f64) -> f64 {
        let denom = 1.0 + tau2 * self.g11;
        let logdet = self.logdet_d + denom.ln();
        let quad = self.grr - tau2 * self.g1r * self.g1r / denom;
        -0.5 * (self.m as f64 * LN_2PI + logdet + quad)
    }

    /// Log-likelihood conditional on a common mean shift `s` applied to all
    /// observations of the specimen (field effects still integrated out).
    /// Quadratic in `s`; used by the joint-model quadrature.
    pub fn loglik_at_shift(&self, s: f64) -> f64 {
        let quad = self.grr - 2.0 * s * self.g1r + s * s * self.g11;
        -0.5 * (self.m as f64 * LN_2PI + self.logdet_d + quad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn dense_mvn_loglik(resid: &[f64], cov: &DMatrix<f64>) -> f64 {
        let chol = cov.clone().cholesky().expect("spd");
        let r = DVector::from_column_slice(resid);
        let z = chol.solve(&r);
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        -0.5 * (resid.len() as f64 * LN_2PI + logdet + r.dot(&z))
    }

    /// Builds the dense covariance tau2*11' + blockdiag(fv*J + sigma2*I).
    fn dense_cov(ns: &[usize], fvs: &[f64], tau2: f64, sigma2: f64) -> DMatrix<f64> {
        let m: usize = ns.iter().sum();
        let mut cov = DMatrix::from_element(m, m, tau2);
        let mut off = 0;
        for (&n, &fv) in ns.iter().zip(fvs) {
            for i in 0..n {
                for j in 0..n {
                    cov[(off + i, off + j)] += fv;
                }
                cov[(off + i, off + i)] += sigma2;
            }
            off += n;
        }
        cov
    }

    #[test]
    fn collapse_matches_dense_cholesky() {
        let resid = [0.3, -1.1, 0.7, 0.2, -0.5, 1.9, -0.4];
        let ns = [3usize, 2, 2];
        let fvs = [0.4, 0.9, 0.0];
        let (tau2, sigma2) = (0.6, 1.3);

        let mut blocks = Vec::new();
        let mut off = 0;
        for (&n, &fv) in ns.iter().zip(&fvs) {
            let slice = &resid[off..off + n];
            blocks.push(FieldBlock {
                n,
                sum_r: slice.iter().sum(),
                sum_r2: slice.iter().map(|r| r * r).sum(),
                field_var: fv,
            });
            off += n;
        }
        let collapse = SpecimenCollapse::accumulate(&blocks, sigma2).unwrap();
        let fast = collapse.marginal_loglik(tau2);
        let dense = dense_mvn_loglik(&resid, &dense_cov(&ns, &fvs, tau2, sigma2));
        assert!((fast - dense).abs() < 1e-10, "fast={fast} dense={dense}");

        // tau2 = 0 reduces to the block-diagonal model
        let fast0 = collapse.marginal_loglik(0.0);
        let dense0 = dense_mvn_loglik(&resid, &dense_cov(&ns, &fvs, 0.0, sigma2));
        assert!((fast0 - dense0).abs() < 1e-10);
    }

    #[test]
    fn shift_quadratic_matches_direct() {
        let resid = [0.5, -0.2, 1.4];
        let block = FieldBlock {
            n: 3,
            sum_r: resid.iter().sum(),
            sum_r2: resid.iter().map(|r| r * r).sum(),
            field_var: 0.7,
        };
        let c = SpecimenCollapse::accumulate(&[block], 0.9).unwrap();
        for s in [-1.0, 0.0, 0.35] {
            let shifted: Vec<f64> = resid.iter().map(|r| r - s).collect();
            let b2 = FieldBlock {
                n: 3,
                sum_r: shifted.iter().sum(),
                sum_r2: shifted.iter().map(|r| r * r).sum(),
                field_var: 0.7,
            };
            let c2 = SpecimenCollapse::accumulate(&[b2], 0.9).unwrap();
            assert!((c.loglik_at_shift(s) - c2.marginal_loglik(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn standard_normal_at_mode() {
        assert!((normal_logpdf(0.0, 0.0, 1.0) + 0.9189385332046727).abs() < 1e-15);
    }

    #[test]
    fn bvn_at_origin() {
        let rho: f64 = -0.78;
        let expect = -LN_2PI - 0.5 * (1.0 - rho * rho).ln();
        assert!((bvn_unit_logpdf(0.0, 0.0, rho) - expect).abs() < 1e-15);
        // independent case factorizes into two standard normals
        let indep = bvn_unit_logpdf(0.7, -0.4, 0.0);
        let split = normal_logpdf(0.7, 0.0, 1.0) + normal_logpdf(-0.4, 0.0, 1.0);
        assert!((indep - split).abs() < 1e-14);
    }
}
