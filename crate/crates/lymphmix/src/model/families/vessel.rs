//! Vessel-level Gaussian families: the three-level log-area model, its
//! conditional variant with the reciprocal cluster size as a covariate, and
//! the heteroscedastic logit-circularity model with group variance
//! multipliers (carcinoma fixed at unity for identifiability).

use super::simulate::{
    assemble, default_areas, default_circs, default_counts, default_pla, nested_gaussian_from,
};
use super::{delta_multiplier, eta, DataView, FieldData, LatentDims, ModelFamily, OutcomeKind};
use crate::domain::{Dataset, Specimen};
use crate::error::{Error, Result};
use crate::mcmc::kernel::ChainKernel;
use crate::mcmc::kernels::gaussian::GaussianKernel;
use crate::model::gaussian::{normal_logpdf, FieldBlock, SpecimenCollapse};
use crate::model::{
    FamilyKind, LatentState, ModelSpec, ParamDesc, ParamId, ParamKind, ParamVector, PriorSpec,
};
use crate::quad::QuadSettings;
use crate::sim::design::SpecimenSkeleton;
use crate::sim::sigmoid_clamped;
use rand_chacha::ChaCha12Rng;

use super::pla::check_positive;

pub struct VaLmm;
pub struct VaConditional;
pub struct CircHet;

/// Role switches for the shared three-level Gaussian machinery.
#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum VesselVariant {
    Area,
    AreaConditional,
    Circ,
}

impl VesselVariant {
    fn use_gamma(self) -> bool {
        matches!(self, VesselVariant::AreaConditional)
    }

    fn heteroscedastic(self) -> bool {
        matches!(self, VesselVariant::Circ)
    }
}

pub(crate) fn vessel_params(variant: VesselVariant, spec: &ModelSpec) -> Vec<ParamDesc> {
    let mut p = vec![
        ParamDesc::new(ParamId::Alpha, "alpha", ParamKind::FixedEffect),
        ParamDesc::new(ParamId::Beta(0), "beta_tz", ParamKind::FixedEffect),
        ParamDesc::new(ParamId::Beta(1), "beta_cin", ParamKind::FixedEffect),
        ParamDesc::new(ParamId::Beta(2), "beta_carc", ParamKind::FixedEffect),
    ];
    if variant.use_gamma() {
        p.push(ParamDesc::new(
            ParamId::Gamma,
            "gamma",
            ParamKind::FixedEffect,
        ));
    }
    p.push(ParamDesc::new(ParamId::Tau2, "tau2", ParamKind::Variance));
    p.push(ParamDesc::new(ParamId::Nu2, "nu2", ParamKind::Variance));
    p.push(ParamDesc::new(
        ParamId::Sigma2,
        "sigma2",
        ParamKind::Variance,
    ));
    if variant.heteroscedastic() && !spec.delta_equal {
        for (i, label) in spec.delta_grouping.labels().iter().enumerate() {
            p.push(ParamDesc::new(
                ParamId::Delta(i),
                format!("delta_{label}"),
                ParamKind::VarianceMultiplier,
            ));
        }
    }
    p
}

/// Mean of one field's vessels given the fixed effects only.
#[inline]
pub(crate) fn field_mean(variant: VesselVariant, theta: &ParamVector, f: &FieldData) -> f64 {
    let mut m = eta(theta.alpha, &theta.beta, f.group);
    if variant.use_gamma() {
        m += theta.gamma.unwrap_or(0.0) / f.n as f64;
    }
    m
}

/// Field-effect variance for one field.
#[inline]
pub(crate) fn field_variance(
    variant: VesselVariant,
    spec: &ModelSpec,
    theta: &ParamVector,
    f: &FieldData,
) -> f64 {
    let nu2 = theta.nu2.unwrap_or(0.0);
    if variant.heteroscedastic() {
        let ones = [1.0; 5];
        let d: &[f64] = theta.delta.as_deref().unwrap_or(&ones);
        delta_multiplier(spec, d, f) * nu2
    } else {
        nu2
    }
}

fn vessel_validate(variant: VesselVariant, spec: &ModelSpec, theta: &ParamVector) -> Result<()> {
    let need =
        |v: Option<f64>, name: &str| v.ok_or_else(|| Error::Param(format!("{name} missing")));
    check_positive("tau2", need(theta.tau2, "tau2")?)?;
    check_positive("nu2", need(theta.nu2, "nu2")?)?;
    check_positive("sigma2", need(theta.sigma2, "sigma2")?)?;
    if variant.use_gamma() {
        need(theta.gamma, "gamma")?;
    }
    if variant.heteroscedastic() && !spec.delta_equal {
        let d = theta
            .delta
            .as_ref()
            .ok_or_else(|| Error::Param("delta missing".into()))?;
        if d.len() != spec.delta_grouping.n_free() {
            return Err(Error::Param(format!(
                "expected {} delta multipliers, got {}",
                spec.delta_grouping.n_free(),
                d.len()
            )));
        }
        for (i, &v) in d.iter().enumerate() {
            check_positive(&format!("delta[{i}]"), v)?;
        }
    }
    Ok(())
}

fn vessel_loglik_conditional(
    variant: VesselVariant,
    spec: &ModelSpec,
    theta: &ParamVector,
    latent: &LatentState,
    view: &DataView,
) -> Result<f64> {
    let sigma2 = theta
        .sigma2
        .ok_or_else(|| Error::Param("sigma2 missing".into()))?;
    check_positive("sigma2", sigma2)?;
    let mut ll = 0.0;
    let mut field_idx = 0;
    for (i, s) in view.specimens.iter().enumerate() {
        let a = latent.a_of(i)[0];
        for f in &s.fields {
            let b = latent.b[field_idx];
            field_idx += 1;
            let m = field_mean(variant, theta, f) + a + b;
            for &y in &f.ys {
                ll += normal_logpdf(y, m, sigma2);
            }
        }
    }
    let _ = spec;
    Ok(ll)
}

fn vessel_latent_logdensity(
    variant: VesselVariant,
    spec: &ModelSpec,
    theta: &ParamVector,
    latent: &LatentState,
    view: &DataView,
) -> Result<f64> {
    let tau2 = theta
        .tau2
        .ok_or_else(|| Error::Param("tau2 missing".into()))?;
    check_positive("tau2", tau2)?;
    let mut ld: f64 = latent.a.iter().map(|&a| normal_logpdf(a, 0.0, tau2)).sum();
    let mut field_idx = 0;
    for s in &view.specimens {
        for f in &s.fields {
            let fv = field_variance(variant, spec, theta, f);
            check_positive("field variance", fv)?;
            ld += normal_logpdf(latent.b[field_idx], 0.0, fv);
            field_idx += 1;
        }
    }
    Ok(ld)
}

pub(crate) fn vessel_marginal(
    variant: VesselVariant,
    spec: &ModelSpec,
    theta: &ParamVector,
    view: &DataView,
) -> Result<f64> {
    let tau2 = theta.tau2.unwrap_or(0.0);
    let sigma2 = theta
        .sigma2
        .ok_or_else(|| Error::Param("sigma2 missing".into()))?;
    if tau2 < 0.0 {
        return Err(Error::Param(format!(
            "tau2 must be nonnegative, got {tau2}"
        )));
    }
    let mut terms = Vec::with_capacity(view.specimens.len());
    for s in &view.specimens {
        let blocks: Vec<FieldBlock> = s
            .fields
            .iter()
            .map(|f| {
                let m = field_mean(variant, theta, f);
                let sum_r = f.sum_y() - f.ys.len() as f64 * m;
                let sum_r2 = f.sum_y2() - 2.0 * m * f.sum_y() + f.ys.len() as f64 * m * m;
                FieldBlock {
                    n: f.ys.len(),
                    sum_r,
                    sum_r2,
                    field_var: field_variance(variant, spec, theta, f),
                }
            })
            .collect();
        terms.push(SpecimenCollapse::accumulate(&blocks, sigma2)?.marginal_loglik(tau2));
    }
    Ok(crate::stats::stable_sum(terms))
}

fn vessel_initial(variant: VesselVariant, spec: &ModelSpec, data: &Dataset) -> ParamVector {
    let outcome = if variant.heteroscedastic() {
        OutcomeKind::LogitCirc
    } else {
        OutcomeKind::LogArea
    };
    let view = DataView::new(data, outcome);
    let init = super::moment_init_vessel_level(&view);
    let delta = if variant.heteroscedastic() && !spec.delta_equal {
        Some(vec![1.0; spec.delta_grouping.n_free()])
    } else {
        None
    };
    ParamVector {
        alpha: init.alpha,
        beta: init.beta,
        tau2: Some(init.var_specimen),
        nu2: Some(init.var_field),
        sigma2: Some(init.var_resid),
        gamma: variant.use_gamma().then_some(0.0),
        delta,
        ..Default::default()
    }
}

macro_rules! vessel_family {
    ($ty:ident, $variant:expr, $name:expr, $kind:expr, $outcome:expr, $desc:expr) => {
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
                $outcome
            }

            fn params(&self, spec: &ModelSpec) -> Vec<ParamDesc> {
                vessel_params($variant, spec)
            }

            fn validate(&self, spec: &ModelSpec, theta: &ParamVector) -> Result<()> {
                vessel_validate($variant, spec, theta)
            }

            fn latent_dims(&self, _data: &Dataset) -> LatentDims {
                LatentDims {
                    a_dim: 1,
                    has_field_effects: true,
                }
            }

            fn loglik_conditional(
                &self,
                spec: &ModelSpec,
                theta: &ParamVector,
                latent: &LatentState,
                data: &Dataset,
            ) -> Result<f64> {
                let view = DataView::new(data, $outcome);
                vessel_loglik_conditional($variant, spec, theta, latent, &view)
            }

            fn latent_logdensity(
                &self,
                spec: &ModelSpec,
                theta: &ParamVector,
                latent: &LatentState,
                data: &Dataset,
            ) -> Result<f64> {
                let view = DataView::new(data, $outcome);
                vessel_latent_logdensity($variant, spec, theta, latent, &view)
            }

            fn marginal_loglik_view(
                &self,
                spec: &ModelSpec,
                theta: &ParamVector,
                view: &DataView,
                _quad: &QuadSettings,
            ) -> Result<f64> {
                vessel_marginal($variant, spec, theta, view)
            }

            fn simulate_specimen(
                &self,
                spec: &ModelSpec,
                theta: &ParamVector,
                skel: &SpecimenSkeleton,
                rng: &mut ChaCha12Rng,
            ) -> Specimen {
                let counts = default_counts(&skel.fields, rng);
                let pla = default_pla(&skel.fields, rng);
                let (areas, circs) = match $variant {
                    VesselVariant::Area | VesselVariant::AreaConditional => {
                        let areas: Vec<Vec<f64>> = nested_gaussian_from(
                            theta,
                            None,
                            $variant.use_gamma(),
                            &skel.fields,
                            &counts,
                            rng,
                        )
                        .into_iter()
                        .map(|f| f.into_iter().map(f64::exp).collect())
                        .collect();
                        let circs = default_circs(&skel.fields, &counts, rng);
                        (areas, circs)
                    }
                    VesselVariant::Circ => {
                        let areas = default_areas(&skel.fields, &counts, rng);
                        let circs: Vec<Vec<f64>> = nested_gaussian_from(
                            theta,
                            Some(spec),
                            false,
                            &skel.fields,
                            &counts,
                            rng,
                        )
                        .into_iter()
                        .map(|f| f.into_iter().map(sigmoid_clamped).collect())
                        .collect();
                        (areas, circs)
                    }
                };
                assemble(skel, pla, areas, circs)
            }

            fn initial_params(&self, spec: &ModelSpec, data: &Dataset) -> ParamVector {
                vessel_initial($variant, spec, data)
            }

            fn make_kernel(
                &self,
                spec: &ModelSpec,
                priors: &PriorSpec,
                data: &Dataset,
            ) -> Result<Box<dyn ChainKernel>> {
                Ok(Box::new(GaussianKernel::new(self, spec, priors, data)?))
            }
        }
    };
}

vessel_family!(
    VaLmm,
    VesselVariant::Area,
    "va_lmm",
    FamilyKind::VaLmm,
    OutcomeKind::LogArea,
    "log vessel area: three-level linear mixed model"
);
vessel_family!(
    VaConditional,
    VesselVariant::AreaConditional,
    "va_conditional",
    FamilyKind::VaConditional,
    OutcomeKind::LogArea,
    "log vessel area with the reciprocal cluster size as a covariate"
);
vessel_family!(
    CircHet,
    VesselVariant::Circ,
    "circ_het",
    FamilyKind::CircHet,
    OutcomeKind::LogitCirc,
    "logit circularity: heteroscedastic field variances by group"
);
