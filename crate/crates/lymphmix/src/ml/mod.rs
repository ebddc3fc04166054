//! Frequentist fitting: marginal-likelihood maximization on the
//! unconstrained scale, Wald standard errors from the observed information,
//! likelihood-ratio tests, and the Poisson/negative-binomial
//! overdispersion comparison.

pub mod optim;
pub mod transform;

use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::model::families::DataView;
use crate::model::registry;
use crate::model::{FamilyKind, ModelSpec, ParamVector};
use crate::quad::QuadSettings;
use nalgebra::DMatrix;
use optim::{maximize, numerical_gradient, OptimOptions};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use transform::Bounds;

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub quad_nodes: usize,
    pub optim: OptimOptions,
    pub bounds: Bounds,
    /// Compute observed-information standard errors at the optimum.
    pub compute_se: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            quad_nodes: 20,
            optim: OptimOptions::default(),
            bounds: Bounds::default(),
            compute_se: true,
        }
    }
}

/// A maximum-likelihood fit: estimates, Wald standard errors (delta method,
/// natural scale), and convergence metadata.
#[derive(Debug, Clone, Serialize)]
pub struct MLFit {
    pub family: FamilyKind,
    pub theta: ParamVector,
    pub max_loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_sup_norm: f64,
    /// (name, estimate, standard error); SEs are NaN when the observed
    /// information is not positive definite.
    pub estimates: Vec<(String, f64, f64)>,
}

impl MLFit {
    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.estimates
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, e, _)| *e)
    }
}

/// Marginal log-likelihood at `theta` (wrapper around the family strategy).
pub fn marginal_loglik(
    spec: &ModelSpec,
    theta: &ParamVector,
    data: &Dataset,
    quad: &QuadSettings,
) -> Result<f64> {
    let family = registry::family(spec.family);
    family.marginal_loglik(spec, theta, data, quad)
}

/// Gradient of the marginal log-likelihood on the unconstrained scale,
/// central differences with the given step.
pub fn marginal_grad_unconstrained(
    spec: &ModelSpec,
    theta: &ParamVector,
    data: &Dataset,
    quad: &QuadSettings,
    bounds: &Bounds,
    step: f64,
) -> Result<Vec<f64>> {
    let family = registry::family(spec.family);
    let layout = family.params(spec);
    let view = DataView::new(data, family.outcome());
    let natural = theta.pack(&layout)?;
    let u0 = transform::pack_unconstrained(&layout, &natural, bounds);
    let obj = |u: &[f64]| -> Result<f64> {
        let nat = transform::unpack_unconstrained(&layout, u, bounds);
        let th = ParamVector::unpack(&layout, &nat)?;
        family.marginal_loglik_view(spec, &th, &view, quad)
    };
    numerical_gradient(&obj, &u0, step)
}

/// Maximizes the marginal likelihood by BFGS on the unconstrained scale.
/// Deterministic given `init` and `opts`; non-convergence returns the best
/// point found with `converged = false`.
pub fn fit_ml(
    spec: &ModelSpec,
    data: &Dataset,
    init: &ParamVector,
    opts: &FitOptions,
) -> Result<MLFit> {
    spec.validate()?;
    let family = registry::family(spec.family);
    let layout = family.params(spec);
    let view = DataView::new(data, family.outcome());
    let quad = QuadSettings::new(opts.quad_nodes)?;
    let natural0 = init.pack(&layout)?;
    let u0 = transform::pack_unconstrained(&layout, &natural0, &opts.bounds);

    let obj = |u: &[f64]| -> Result<f64> {
        let nat = transform::unpack_unconstrained(&layout, u, &opts.bounds);
        let th = ParamVector::unpack(&layout, &nat)?;
        family.marginal_loglik_view(spec, &th, &view, &quad)
    };

    let r = maximize(&obj, &u0, &opts.optim)?;
    let natural = transform::unpack_unconstrained(&layout, &r.x, &opts.bounds);
    let theta = ParamVector::unpack(&layout, &natural)?;

    let ses = if opts.compute_se {
        observed_info_se(&obj, &r.x, &layout, &opts.bounds)
    } else {
        vec![f64::NAN; layout.len()]
    };
    let estimates = layout
        .iter()
        .zip(natural.iter().zip(&ses))
        .map(|(d, (&e, &s))| (d.name.clone(), e, s))
        .collect();

    Ok(MLFit {
        family: spec.family,
        theta,
        max_loglik: r.f,
        converged: r.converged,
        iterations: r.iterations,
        grad_sup_norm: r.grad_sup_norm,
        estimates,
    })
}

/// Delta-method standard errors from the observed information (numerical
/// Hessian of the unconstrained objective).
fn observed_info_se(
    obj: &dyn Fn(&[f64]) -> Result<f64>,
    u: &[f64],
    layout: &[crate::model::ParamDesc],
    bounds: &Bounds,
) -> Vec<f64> {
    let n = u.len();
    let h = 1e-4;
    let grad_at = |x: &[f64]| numerical_gradient(obj, x, 1e-5);
    let mut hess = DMatrix::<f64>::zeros(n, n);
    let mut xp = u.to_vec();
    for j in 0..n {
        let hj = h * u[j].abs().max(1.0);
        xp[j] = u[j] + hj;
        let gp = match grad_at(&xp) {
            Ok(g) => g,
            Err(_) => return vec![f64::NAN; n],
        };
        xp[j] = u[j] - hj;
        let gm = match grad_at(&xp) {
            Ok(g) => g,
            Err(_) => return vec![f64::NAN; n],
        };
        xp[j] = u[j];
        for i in 0..n {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * hj);
        }
    }
    // symmetrize and invert the negative Hessian
    let sym = (hess.clone() + hess.transpose()) * 0.5;
    let neg = -sym;
    match neg.cholesky() {
        Some(chol) => {
            let cov = chol.inverse();
            (0..n)
                .map(|i| {
                    let var_u = cov[(i, i)];
                    if var_u > 0.0 {
                        transform::jacobian(layout[i].kind, u[i], bounds) * var_u.sqrt()
                    } else {
                        f64::NAN
                    }
                })
                .collect()
        }
        None => vec![f64::NAN; n],
    }
}

/// Likelihood-ratio test of a constrained model nested in a general one.
#[derive(Debug, Clone, Serialize)]
pub struct LrtResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// True when the raw statistic was negative (optimizer noise) and was
    /// clamped to zero.
    pub clamped: bool,
}

pub fn lrt(fit_general: &MLFit, fit_constrained: &MLFit, df: usize) -> Result<LrtResult> {
    lrt_from_logliks(fit_general.max_loglik, fit_constrained.max_loglik, df)
}

pub fn lrt_from_logliks(ll_general: f64, ll_constrained: f64, df: usize) -> Result<LrtResult> {
    if df == 0 {
        return Err(Error::Param("LRT needs df >= 1".into()));
    }
    let raw = 2.0 * (ll_general - ll_constrained);
    let clamped = raw < 0.0;
    let statistic = raw.max(0.0);
    let chi2 = ChiSquared::new(df as f64)
        .map_err(|e| Error::Numerical(format!("chi-squared df {df}: {e}")))?;
    let p_value = if statistic == 0.0 {
        1.0
    } else {
        chi2.sf(statistic)
    };
    Ok(LrtResult {
        statistic,
        df,
        p_value,
        clamped,
    })
}

/// Fits the shifted-Poisson and shifted-NB models and reports the
/// log-likelihood change and the dispersion estimate.
#[derive(Debug, Clone, Serialize)]
pub struct OverdispersionReport {
    pub poisson: MLFit,
    pub negbin: MLFit,
    /// negbin max loglik minus Poisson max loglik.
    pub delta_loglik: f64,
    pub dispersion: f64,
}

pub fn compare_overdispersion(data: &Dataset, opts: &FitOptions) -> Result<OverdispersionReport> {
    let pois_spec = ModelSpec::new(FamilyKind::LvdPois);
    let pois_family = registry::family(FamilyKind::LvdPois);
    let pois = fit_ml(
        &pois_spec,
        data,
        &pois_family.initial_params(&pois_spec, data),
        opts,
    )?;

    let nb_spec = ModelSpec::new(FamilyKind::LvdNegBin);
    // warm start from the Poisson fit with a large dispersion
    let mut nb_init = pois.theta.clone();
    nb_init.dispersion = Some(10.0);
    let negbin = fit_ml(&nb_spec, data, &nb_init, opts)?;

    Ok(OverdispersionReport {
        delta_loglik: negbin.max_loglik - pois.max_loglik,
        dispersion: negbin.theta.dispersion.unwrap_or(f64::NAN),
        poisson: pois,
        negbin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lrt_equal_logliks() {
        let r = lrt_from_logliks(-100.0, -100.0, 2).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(!r.clamped);
    }

    #[test]
    fn lrt_chi2_df2_closed_form() {
        // chi-squared tail with 2 df is exp(-x/2)
        let r = lrt_from_logliks(-93.1, -100.0, 2).unwrap();
        assert!((r.statistic - 13.8).abs() < 1e-12);
        let expect = (-6.9f64).exp();
        assert!((r.p_value - expect).abs() < 1e-12, "p = {}", r.p_value);
        assert!((r.p_value - 0.001).abs() < 2e-5);
    }

    #[test]
    fn lrt_clamps_negative_statistics() {
        let r = lrt_from_logliks(-100.5, -100.0, 1).unwrap();
        assert!(r.clamped);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn lrt_rejects_zero_df() {
        assert!(lrt_from_logliks(-1.0, -2.0, 0).is_err());
    }
}
