//! %LA family: untransformed field-level Gaussian outcome with a specimen
//! random intercept (no field effect: the field is the observational unit).

use super::simulate::{assemble, default_areas, default_circs, default_counts, pla_from};
use super::{eta, DataView, LatentDims, ModelFamily, OutcomeKind};
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
use rand_chacha::ChaCha12Rng;

pub struct PlaLmm;

pub(crate) fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Param(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

impl ModelFamily for PlaLmm {
    fn name(&self) -> &'static str {
        "pla_lmm"
    }

    fn kind(&self) -> FamilyKind {
        FamilyKind::PlaLmm
    }

    fn describe(&self) -> &'static str {
        "percentage lymphatic area: two-level linear mixed model"
    }

    fn outcome(&self) -> OutcomeKind {
        OutcomeKind::Pla
    }

    fn params(&self, _spec: &ModelSpec) -> Vec<ParamDesc> {
        vec![
            ParamDesc::new(ParamId::Alpha, "alpha", ParamKind::FixedEffect),
            ParamDesc::new(ParamId::Beta(0), "beta_tz", ParamKind::FixedEffect),
            ParamDesc::new(ParamId::Beta(1), "beta_cin", ParamKind::FixedEffect),
            ParamDesc::new(ParamId::Beta(2), "beta_carc", ParamKind::FixedEffect),
            ParamDesc::new(ParamId::Tau2, "tau2", ParamKind::Variance),
            ParamDesc::new(ParamId::Sigma2, "sigma2", ParamKind::Variance),
        ]
    }

    fn validate(&self, _spec: &ModelSpec, theta: &ParamVector) -> Result<()> {
        check_positive(
            "tau2",
            theta
                .tau2
                .ok_or_else(|| Error::Param("tau2 missing".into()))?,
        )?;
        check_positive(
            "sigma2",
            theta
                .sigma2
                .ok_or_else(|| Error::Param("sigma2 missing".into()))?,
        )
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
        let sigma2 = theta
            .sigma2
            .ok_or_else(|| Error::Param("sigma2 missing".into()))?;
        check_positive("sigma2", sigma2)?;
        let mut ll = 0.0;
        for (i, s) in data.specimens().iter().enumerate() {
            let a = latent.a_of(i)[0];
            for f in &s.fields {
                let m = eta(theta.alpha, &theta.beta, f.tissue.coarse().index()) + a;
                ll += normal_logpdf(f.pla, m, sigma2);
            }
        }
        Ok(ll)
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
        _quad: &QuadSettings,
    ) -> Result<f64> {
        // closed form: tau2 >= 0 permitted so the no-random-effect limit is
        // evaluable directly
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
                    let r = f.pla - eta(theta.alpha, &theta.beta, f.group);
                    FieldBlock {
                        n: 1,
                        sum_r: r,
                        sum_r2: r * r,
                        field_var: 0.0,
                    }
                })
                .collect();
            terms.push(SpecimenCollapse::accumulate(&blocks, sigma2)?.marginal_loglik(tau2));
        }
        Ok(crate::stats::stable_sum(terms))
    }

    fn simulate_specimen(
        &self,
        _spec: &ModelSpec,
        theta: &ParamVector,
        skel: &SpecimenSkeleton,
        rng: &mut ChaCha12Rng,
    ) -> Specimen {
        let counts = default_counts(&skel.fields, rng);
        let pla = pla_from(theta, &skel.fields, rng);
        let areas = default_areas(&skel.fields, &counts, rng);
        let circs = default_circs(&skel.fields, &counts, rng);
        assemble(skel, pla, areas, circs)
    }

    fn initial_params(&self, _spec: &ModelSpec, data: &Dataset) -> ParamVector {
        let view = DataView::new(data, OutcomeKind::Pla);
        let init = super::moment_init_field_level(&view, |f| f.pla);
        ParamVector {
            alpha: init.alpha,
            beta: init.beta,
            tau2: Some(init.var_specimen),
            sigma2: Some(init.var_resid),
            ..Default::default()
        }
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
