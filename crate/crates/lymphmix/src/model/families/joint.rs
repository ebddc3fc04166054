//! The joint family: log vessel area and the cluster size share a bivariate
//! specimen effect (unit variances, correlation rho) entering each linear
//! predictor through a loading. Field effects remain area-only, so the
//! cross-outcome dependence is purely specimen-level.
//!
//! The marginal likelihood integrates the field effects analytically
//! conditional on the area-side specimen effect (the collapse is quadratic
//! in that effect), then runs mode-centered 2-D adaptive Gauss–Hermite over
//! the bivariate specimen effect.

use super::simulate::{assemble, default_circs, default_pla};
use super::{eta, DataView, LatentDims, ModelFamily, OutcomeKind};
use crate::domain::{Dataset, Specimen};
use crate::error::{Error, Result};
use crate::mcmc::kernel::ChainKernel;
use crate::mcmc::kernels::joint::JointKernel;
use crate::model::gaussian::{bvn_unit_logpdf, normal_logpdf, FieldBlock, SpecimenCollapse};
use crate::model::poisson::shifted_poisson_logpmf;
use crate::model::{
    FamilyKind, LatentState, ModelSpec, ParamDesc, ParamId, ParamKind, ParamVector, PriorSpec,
};
use crate::quad::{agh_2d, newton_mode_2d, QuadSettings};
use crate::sim::design::SpecimenSkeleton;
use crate::sim::{draw_normal, draw_shifted_poisson};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use super::pla::check_positive;

pub struct Joint;

impl Joint {
    fn rho_of(spec: &ModelSpec, theta: &ParamVector) -> Result<f64> {
        if spec.rho_zero {
            return Ok(0.0);
        }
        let rho = theta
            .rho
            .ok_or_else(|| Error::Param("rho missing".into()))?;
        if !(rho > -0.95 && rho < 0.95) {
            return Err(Error::Param(format!(
                "rho must lie in (-0.95, 0.95), got {rho}"
            )));
        }
        Ok(rho)
    }
}

impl ModelFamily for Joint {
    fn name(&self) -> &'static str {
        "joint"
    }

    fn kind(&self) -> FamilyKind {
        FamilyKind::Joint
    }

    fn describe(&self) -> &'static str {
        "joint vessel-area / cluster-size model with linked specimen effects"
    }

    fn outcome(&self) -> OutcomeKind {
        OutcomeKind::LogArea
    }

    fn params(&self, spec: &ModelSpec) -> Vec<ParamDesc> {
        let mut p = vec![
            ParamDesc::new(ParamId::Alpha, "alpha_a", ParamKind::FixedEffect),
            ParamDesc::new(ParamId::Beta(0), "beta_a_tz", ParamKind::FixedEffect),
            ParamDesc::new(ParamId::Beta(1), "beta_a_cin", ParamKind::FixedEffect),
            ParamDesc::new(ParamId::Beta(2), "beta_a_carc", ParamKind::FixedEffect),
            ParamDesc::new(ParamId::AlphaN, "alpha_n", ParamKind::FixedEffect),
            ParamDesc::new(ParamId::BetaN(0), "beta_n_tz", ParamKind::FixedEffect),
            ParamDesc::new(ParamId::BetaN(1), "beta_n_cin", ParamKind::FixedEffect),
            ParamDesc::new(ParamId::BetaN(2), "beta_n_carc", ParamKind::FixedEffect),
            ParamDesc::new(ParamId::LambdaA, "lambda_a", ParamKind::Loading),
            ParamDesc::new(ParamId::LambdaN, "lambda_n", ParamKind::Loading),
            ParamDesc::new(ParamId::Nu2, "nu2", ParamKind::Variance),
            ParamDesc::new(ParamId::Sigma2, "sigma2", ParamKind::Variance),
        ];
        if !spec.rho_zero {
            p.push(ParamDesc::new(ParamId::Rho, "rho", ParamKind::Correlation));
        }
        p
    }

    fn validate(&self, spec: &ModelSpec, theta: &ParamVector) -> Result<()> {
        let need = |v: Option<f64>, n: &str| v.ok_or_else(|| Error::Param(format!("{n} missing")));
        check_positive("nu2", need(theta.nu2, "nu2")?)?;
        check_positive("sigma2", need(theta.sigma2, "sigma2")?)?;
        need(theta.alpha_n, "alpha_n")?;
        theta
            .beta_n
            .ok_or_else(|| Error::Param("beta_n missing".into()))?;
        need(theta.lambda_a, "lambda_a")?;
        need(theta.lambda_n, "lambda_n")?;
        Self::rho_of(spec, theta)?;
        Ok(())
    }

    fn latent_dims(&self, _data: &Dataset) -> LatentDims {
        LatentDims {
            a_dim: 2,
            has_field_effects: true,
        }
    }

    fn loglik_conditional(
        &self,
        _spec: &ModelSpec,
        theta: &ParamVector,
        latent: &LatentState,
        data: &Dataset,
    ) -> Result<f64> {
        let sigma2 = theta
            .sigma2
            .ok_or_else(|| Error::Param("sigma2 missing".into()))?;
        check_positive("sigma2", sigma2)?;
        let la = theta
            .lambda_a
            .ok_or_else(|| Error::Param("lambda_a missing".into()))?;
        let ln = theta
            .lambda_n
            .ok_or_else(|| Error::Param("lambda_n missing".into()))?;
        let alpha_n = theta
            .alpha_n
            .ok_or_else(|| Error::Param("alpha_n missing".into()))?;
        let beta_n = theta
            .beta_n
            .ok_or_else(|| Error::Param("beta_n missing".into()))?;
        let mut ll = 0.0;
        let mut field_idx = 0;
        for (i, s) in data.specimens().iter().enumerate() {
            let a = latent.a_of(i);
            let (aa, an) = (a[0], a[1]);
            for f in &s.fields {
                let g = f.tissue.coarse().index();
                let b = latent.b[field_idx];
                field_idx += 1;
                let m = eta(theta.alpha, &theta.beta, g) + la * aa + b;
                for v in &f.vessels {
                    ll += normal_logpdf(v.log_area(), m, sigma2);
                }
                let mu = (eta(alpha_n, &beta_n, g) + ln * an).exp();
                ll += shifted_poisson_logpmf(f.lvd() as u64, mu)?;
            }
        }
        Ok(ll)
    }

    fn latent_logdensity(
        &self,
        spec: &ModelSpec,
        theta: &ParamVector,
        latent: &LatentState,
        _data: &Dataset,
    ) -> Result<f64> {
        let nu2 = theta
            .nu2
            .ok_or_else(|| Error::Param("nu2 missing".into()))?;
        check_positive("nu2", nu2)?;
        let rho = Self::rho_of(spec, theta)?;
        let mut ld = 0.0;
        for i in 0..latent.a.len() / 2 {
            let a = latent.a_of(i);
            ld += bvn_unit_logpdf(a[0], a[1], rho);
        }
        ld += latent
            .b
            .iter()
            .map(|&b| normal_logpdf(b, 0.0, nu2))
            .sum::<f64>();
        Ok(ld)
    }

    fn marginal_loglik_view(
        &self,
        spec: &ModelSpec,
        theta: &ParamVector,
        view: &DataView,
        quad: &QuadSettings,
    ) -> Result<f64> {
        let sigma2 = theta
            .sigma2
            .ok_or_else(|| Error::Param("sigma2 missing".into()))?;
        let nu2 = theta
            .nu2
            .ok_or_else(|| Error::Param("nu2 missing".into()))?;
        check_positive("sigma2", sigma2)?;
        if nu2 < 0.0 {
            return Err(Error::Param(format!("nu2 must be nonnegative, got {nu2}")));
        }
        let la = theta
            .lambda_a
            .ok_or_else(|| Error::Param("lambda_a missing".into()))?;
        let lnl = theta
            .lambda_n
            .ok_or_else(|| Error::Param("lambda_n missing".into()))?;
        let alpha_n = theta
            .alpha_n
            .ok_or_else(|| Error::Param("alpha_n missing".into()))?;
        let beta_n = theta
            .beta_n
            .ok_or_else(|| Error::Param("beta_n missing".into()))?;
        let rho = Self::rho_of(spec, theta)?;
        let om = 1.0 - rho * rho;

        // per-specimen integrals run concurrently; the sorted reduction
        // keeps the total independent of scheduling
        use rayon::prelude::*;
        let terms: Vec<f64> = view
            .specimens
            .par_iter()
            .map(|s| -> Result<f64> {
                // area side: field effects integrated out, quadratic in the
                // common shift la * a_A
                let blocks: Vec<FieldBlock> = s
                    .fields
                    .iter()
                    .map(|f| {
                        let m = eta(theta.alpha, &theta.beta, f.group);
                        let k = f.ys.len() as f64;
                        FieldBlock {
                            n: f.ys.len(),
                            sum_r: f.sum_y() - k * m,
                            sum_r2: f.sum_y2() - 2.0 * m * f.sum_y() + k * m * m,
                            field_var: nu2,
                        }
                    })
                    .collect();
                let collapse = SpecimenCollapse::accumulate(&blocks, sigma2)?;

                // count side sufficient statistics (canonical-order sums)
                let s1 =
                    crate::stats::stable_sum(s.fields.iter().map(|f| (f.n - 1) as f64).collect());
                let mut s2_terms = Vec::with_capacity(s.fields.len());
                let mut c_terms = Vec::with_capacity(s.fields.len());
                for f in &s.fields {
                    let e = eta(alpha_n, &beta_n, f.group);
                    s2_terms.push(e.exp());
                    c_terms.push((f.n - 1) as f64 * e - ln_gamma(f.n as f64));
                }
                let s2 = crate::stats::stable_sum(s2_terms);
                let c = crate::stats::stable_sum(c_terms);

                let log_f = |aa: f64, an: f64| {
                    collapse.loglik_at_shift(la * aa) + c + s1 * lnl * an - (lnl * an).exp() * s2
                        + bvn_unit_logpdf(aa, an, rho)
                };
                let grad = |x: [f64; 2]| {
                    let (aa, an) = (x[0], x[1]);
                    [
                        la * (collapse.g1r - la * aa * collapse.g11) - (aa - rho * an) / om,
                        lnl * (s1 - (lnl * an).exp() * s2) - (an - rho * aa) / om,
                    ]
                };
                let neg_hess = |x: [f64; 2]| {
                    let an = x[1];
                    [
                        [la * la * collapse.g11 + 1.0 / om, -rho / om],
                        [-rho / om, lnl * lnl * (lnl * an).exp() * s2 + 1.0 / om],
                    ]
                };
                let (mode, hess) = match newton_mode_2d(grad, neg_hess, [0.0, 0.0]) {
                    Some(found) => found,
                    // wide fallback grid centered at the prior
                    None => (
                        [0.0, 0.0],
                        [
                            [1.0 / (9.0 * om), -rho / (9.0 * om)],
                            [-rho / (9.0 * om), 1.0 / (9.0 * om)],
                        ],
                    ),
                };
                agh_2d(&quad.rule, log_f, mode, hess).map_err(|e| {
                    Error::Numerical(format!(
                        "joint quadrature failed (mode {:?}, curvature {:?}): {e}",
                        mode, hess
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(crate::stats::stable_sum(terms))
    }

    fn simulate_specimen(
        &self,
        spec: &ModelSpec,
        theta: &ParamVector,
        skel: &SpecimenSkeleton,
        rng: &mut ChaCha12Rng,
    ) -> Specimen {
        let rho = if spec.rho_zero {
            0.0
        } else {
            theta.rho.unwrap_or(0.0)
        };
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let aa = z1;
        let an = rho * z1 + (1.0 - rho * rho).sqrt() * z2;

        let la = theta.lambda_a.unwrap_or(0.0);
        let lnl = theta.lambda_n.unwrap_or(0.0);
        let alpha_n = theta.alpha_n.unwrap_or(0.0);
        let beta_n = theta.beta_n.unwrap_or([0.0; 3]);
        let nu2 = theta.nu2.unwrap_or(0.0);
        let sigma2 = theta.sigma2.unwrap_or(0.0);

        let counts: Vec<usize> = skel
            .fields
            .iter()
            .map(|t| {
                let mu = (eta(alpha_n, &beta_n, t.coarse().index()) + lnl * an).exp();
                draw_shifted_poisson(rng, mu)
            })
            .collect();
        let pla = default_pla(&skel.fields, rng);
        let areas: Vec<Vec<f64>> = skel
            .fields
            .iter()
            .zip(&counts)
            .map(|(t, &n)| {
                let m = eta(theta.alpha, &theta.beta, t.coarse().index()) + la * aa;
                let b = draw_normal(rng, 0.0, nu2);
                (0..n)
                    .map(|_| draw_normal(rng, m + b, sigma2).exp())
                    .collect()
            })
            .collect();
        let circs = default_circs(&skel.fields, &counts, rng);
        assemble(skel, pla, areas, circs)
    }

    fn initial_params(&self, _spec: &ModelSpec, data: &Dataset) -> ParamVector {
        let area_view = DataView::new(data, OutcomeKind::LogArea);
        let area_init = super::moment_init_vessel_level(&area_view);

        // crude count-side group means on the shifted scale
        let mut sums = [0.0f64; 4];
        let mut counts = [0usize; 4];
        for s in &area_view.specimens {
            for f in &s.fields {
                sums[f.group] += (f.n - 1) as f64;
                counts[f.group] += 1;
            }
        }
        let grand = (sums.iter().sum::<f64>() / area_view.n_fields.max(1) as f64).max(0.05);
        let gmean = |g: usize| {
            if counts[g] > 0 {
                (sums[g] / counts[g] as f64).max(0.05)
            } else {
                grand
            }
        };
        let alpha_n = gmean(0).ln();

        // canonical orientation: positive area loading, negative count
        // loading
        ParamVector {
            alpha: area_init.alpha,
            beta: area_init.beta,
            alpha_n: Some(alpha_n),
            beta_n: Some([
                gmean(1).ln() - alpha_n,
                gmean(2).ln() - alpha_n,
                gmean(3).ln() - alpha_n,
            ]),
            lambda_a: Some(area_init.var_specimen.sqrt().max(0.05)),
            lambda_n: Some(-0.15),
            nu2: Some(area_init.var_field),
            sigma2: Some(area_init.var_resid),
            rho: Some(0.0),
            ..Default::default()
        }
    }

    fn make_kernel(
        &self,
        spec: &ModelSpec,
        priors: &PriorSpec,
        data: &Dataset,
    ) -> Result<Box<dyn ChainKernel>> {
        Ok(Box::new(JointKernel::new(self, spec, priors, data)?))
    }
}
