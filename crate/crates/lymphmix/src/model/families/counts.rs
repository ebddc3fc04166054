//! Cluster-size families: the shifted-Poisson mixed model for LVD and the
//! shifted negative-binomial comparison model. The marginal likelihood uses
//! mode-centered adaptive Gauss–Hermite quadrature over the specimen
//! effect, with a wide non-adaptive grid as fallback.

use super::simulate::{assemble, counts_from, default_areas, default_circs, default_pla};
use super::{eta, DataView, FieldData, LatentDims, ModelFamily, OutcomeKind};
use crate::domain::{Dataset, Specimen};
use crate::error::{Error, Result};
use crate::mcmc::kernel::ChainKernel;
use crate::mcmc::kernels::count::CountKernel;
use crate::model::gaussian::{normal_logpdf, LN_2PI};
use crate::model::poisson::{shifted_negbin_logpmf, shifted_poisson_logpmf};
use crate::model::{
    FamilyKind, LatentState, ModelSpec, ParamDesc, ParamId, ParamKind, ParamVector, PriorSpec,
};
use crate::quad::{agh_1d, newton_mode_1d, QuadSettings};
use crate::sim::design::SpecimenSkeleton;
use rand_chacha::ChaCha12Rng;
use statrs::function::gamma::ln_gamma;

use super::pla::check_positive;

pub struct LvdPois;
pub struct LvdNegBin;

fn count_params(negbin: bool) -> Vec<ParamDesc> {
    let mut p = vec![
        ParamDesc::new(ParamId::Alpha, "alpha", ParamKind::FixedEffect),
        ParamDesc::new(ParamId::Beta(0), "beta_tz", ParamKind::FixedEffect),
        ParamDesc::new(ParamId::Beta(1), "beta_cin", ParamKind::FixedEffect),
        ParamDesc::new(ParamId::Beta(2), "beta_carc", ParamKind::FixedEffect),
        ParamDesc::new(ParamId::Tau2, "tau2", ParamKind::Variance),
    ];
    if negbin {
        p.push(ParamDesc::new(
            ParamId::Dispersion,
            "dispersion",
            ParamKind::Dispersion,
        ));
    }
    p
}

fn count_validate(negbin: bool, theta: &ParamVector) -> Result<()> {
    check_positive(
        "tau2",
        theta
            .tau2
            .ok_or_else(|| Error::Param("tau2 missing".into()))?,
    )?;
    if negbin {
        check_positive(
            "dispersion",
            theta
                .dispersion
                .ok_or_else(|| Error::Param("dispersion missing".into()))?,
        )?;
    }
    Ok(())
}

fn count_loglik_conditional(
    negbin: bool,
    theta: &ParamVector,
    latent: &LatentState,
    data: &Dataset,
) -> Result<f64> {
    let kappa = theta.dispersion.unwrap_or(f64::NAN);
    let mut ll = 0.0;
    for (i, s) in data.specimens().iter().enumerate() {
        let a = latent.a_of(i)[0];
        for f in &s.fields {
            let mu = (eta(theta.alpha, &theta.beta, f.tissue.coarse().index()) + a).exp();
            ll += if negbin {
                shifted_negbin_logpmf(f.lvd() as u64, mu, kappa)?
            } else {
                shifted_poisson_logpmf(f.lvd() as u64, mu)?
            };
        }
    }
    Ok(ll)
}

/// Marginal specimen contribution: the specimen effect integrated out by
/// adaptive quadrature (or skipped when tau2 = 0).
fn count_specimen_marginal(
    negbin: bool,
    fields: &[FieldData],
    theta: &ParamVector,
    quad: &QuadSettings,
) -> Result<f64> {
    let tau2 = theta.tau2.unwrap_or(0.0);
    if tau2 < 0.0 {
        return Err(Error::Param(format!(
            "tau2 must be nonnegative, got {tau2}"
        )));
    }
    let etas: Vec<f64> = fields
        .iter()
        .map(|f| eta(theta.alpha, &theta.beta, f.group))
        .collect();

    if tau2 == 0.0 {
        let mut ll = 0.0;
        for (f, e) in fields.iter().zip(&etas) {
            ll += if negbin {
                shifted_negbin_logpmf(f.n as u64, e.exp(), theta.dispersion.unwrap())?
            } else {
                shifted_poisson_logpmf(f.n as u64, e.exp())?
            };
        }
        return Ok(ll);
    }

    let prior = move |a: f64| -0.5 * (LN_2PI + tau2.ln() + a * a / tau2);

    if !negbin {
        // sufficient statistics: the Poisson part needs only
        // sum(n-1), sum(exp(eta)) and a constant; canonical-order sums keep
        // the result invariant to field order
        let s1 = crate::stats::stable_sum(fields.iter().map(|f| (f.n - 1) as f64).collect());
        let s2 = crate::stats::stable_sum(etas.iter().map(|e| e.exp()).collect());
        let c = crate::stats::stable_sum(
            fields
                .iter()
                .zip(&etas)
                .map(|(f, e)| (f.n - 1) as f64 * e - ln_gamma(f.n as f64))
                .collect(),
        );
        let log_f = move |a: f64| c + s1 * a - a.exp() * s2 + prior(a);
        let grad = move |a: f64| s1 - a.exp() * s2 - a / tau2;
        let neg_hess = move |a: f64| a.exp() * s2 + 1.0 / tau2;
        let (mode, curv) = newton_mode_1d(grad, neg_hess, 0.0).unwrap_or((0.0, 1.0 / (9.0 * tau2)));
        return Ok(agh_1d(&quad.rule, log_f, mode, curv));
    }

    let kappa = theta.dispersion.unwrap();
    check_positive("dispersion", kappa)?;
    // per-field pieces that do not depend on the latent effect; the stable
    // ln1p form keeps the integrand exact for arbitrarily large kappa
    let consts = crate::stats::stable_sum(
        fields
            .iter()
            .zip(&etas)
            .map(|(f, e)| {
                let m = (f.n - 1) as f64;
                crate::model::poisson::negbin_ln_rising(f.n as u64, kappa) - ln_gamma(m + 1.0)
                    + m * e
            })
            .collect(),
    );
    let s1 = crate::stats::stable_sum(fields.iter().map(|f| (f.n - 1) as f64).collect());
    let mut pairs: Vec<(f64, f64)> = fields
        .iter()
        .zip(&etas)
        .map(|(f, e)| ((f.n - 1) as f64, e.exp()))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let log_f = {
        let pairs = pairs.clone();
        move |a: f64| {
            let ea = a.exp();
            let mut v = consts + s1 * a + prior(a);
            for &(m, emu) in &pairs {
                v -= (kappa + m) * (emu * ea / kappa).ln_1p();
            }
            v
        }
    };
    let grad = {
        let pairs = pairs.clone();
        move |a: f64| {
            let ea = a.exp();
            let mut g = s1 - a / tau2;
            for &(m, emu) in &pairs {
                let mu = emu * ea;
                g -= (kappa + m) * mu / (kappa + mu);
            }
            g
        }
    };
    let neg_hess = move |a: f64| {
        let ea = a.exp();
        let mut h = 1.0 / tau2;
        for &(m, emu) in &pairs {
            let mu = emu * ea;
            h += (kappa + m) * kappa * mu / ((kappa + mu) * (kappa + mu));
        }
        h
    };
    let (mode, curv) = newton_mode_1d(grad, neg_hess, 0.0).unwrap_or((0.0, 1.0 / (9.0 * tau2)));
    Ok(agh_1d(&quad.rule, log_f, mode, curv))
}

fn count_initial(negbin: bool, data: &Dataset) -> ParamVector {
    let view = DataView::new(data, OutcomeKind::Count);
    let mut sums = [0.0f64; 4];
    let mut counts = [0usize; 4];
    for s in &view.specimens {
        for f in &s.fields {
            sums[f.group] += (f.n - 1) as f64;
            counts[f.group] += 1;
        }
    }
    let grand = (sums.iter().sum::<f64>() / view.n_fields.max(1) as f64).max(0.05);
    let gmean = |g: usize| {
        if counts[g] > 0 {
            (sums[g] / counts[g] as f64).max(0.05)
        } else {
            grand
        }
    };
    let alpha = gmean(0).ln();
    ParamVector {
        alpha,
        beta: [
            gmean(1).ln() - alpha,
            gmean(2).ln() - alpha,
            gmean(3).ln() - alpha,
        ],
        tau2: Some(0.05),
        dispersion: negbin.then_some(2.0),
        ..Default::default()
    }
}

macro_rules! count_family {
    ($ty:ident, $negbin:expr, $name:expr, $kind:expr, $desc:expr) => {
        impl ModelFamily for $ty {
            fn name(&self) -> &'static str {
                $name
            }

            fn kind(&self) -> FamilyKind {
                $kind
            }

            fn describe(&self) -> &'static str {
                $desc
            }

            fn outcome(&self) -> OutcomeKind {
                OutcomeKind::Count
            }

            fn params(&self, _spec: &ModelSpec) -> Vec<ParamDesc> {
                count_params($negbin)
            }

            fn validate(&self, _spec: &ModelSpec, theta: &ParamVector) -> Result<()> {
                count_validate($negbin, theta)
            }

            fn latent_dims(&self, _data: &Dataset) -> LatentDims {
                LatentDims {
                    a_dim: 1,
                    has_field_effects: false,
                }
            }

            fn loglik_conditional(
                &self,
                _spec: &ModelSpec,
                theta: &ParamVector,
                latent: &LatentState,
                data: &Dataset,
            ) -> Result<f64> {
                count_loglik_conditional($negbin, theta, latent, data)
            }

            fn latent_logdensity(
                &self,
                _spec: &ModelSpec,
                theta: &ParamVector,
                latent: &LatentState,
                _data: &Dataset,
            ) -> Result<f64> {
                let tau2 = theta
                    .tau2
                    .ok_or_else(|| Error::Param("tau2 missing".into()))?;
                check_positive("tau2", tau2)?;
                Ok(latent.a.iter().map(|&a| normal_logpdf(a, 0.0, tau2)).sum())
            }

            fn marginal_loglik_view(
                &self,
                _spec: &ModelSpec,
                theta: &ParamVector,
                view: &DataView,
                quad: &QuadSettings,
            ) -> Result<f64> {
                // per-specimen integrals run concurrently; the sorted
                // reduction keeps the total scheduling-independent
                use rayon::prelude::*;
                let terms: Vec<f64> = view
                    .specimens
                    .par_iter()
                    .map(|s| count_specimen_marginal($negbin, &s.fields, theta, quad))
                    .collect::<Result<Vec<f64>>>()?;
                Ok(crate::stats::stable_sum(terms))
            }

            fn simulate_specimen(
                &self,
                _spec: &ModelSpec,
                theta: &ParamVector,
                skel: &SpecimenSkeleton,
                rng: &mut ChaCha12Rng,
            ) -> Specimen {
                let counts = counts_from(theta, $negbin, &skel.fields, rng);
                let pla = default_pla(&skel.fields, rng);
                let areas = default_areas(&skel.fields, &counts, rng);
                let circs = default_circs(&skel.fields, &counts, rng);
                assemble(skel, pla, areas, circs)
            }

            fn initial_params(&self, _spec: &ModelSpec, data: &Dataset) -> ParamVector {
                count_initial($negbin, data)
            }

            fn make_kernel(
                &self,
                spec: &ModelSpec,
                priors: &PriorSpec,
                data: &Dataset,
            ) -> Result<Box<dyn ChainKernel>> {
                Ok(Box::new(CountKernel::new(
                    self, spec, priors, data, $negbin,
                )?))
            }
        }
    };
}

count_family!(
    LvdPois,
    false,
    "lvd_pois",
    FamilyKind::LvdPois,
    "vessel count: shifted-Poisson mixed model with log link"
);
count_family!(
    LvdNegBin,
    true,
    "lvd_negbin",
    FamilyKind::LvdNegBin,
    "vessel count: shifted negative-binomial overdispersion comparison"
);
