//! Kernel for the cluster-size families. The Poisson/NB likelihood breaks
//! conjugacy for the specimen effects, so they update by per-specimen
//! adaptive Metropolis; the specimen-variance precision stays conjugate.

use crate::domain::Dataset;
use crate::error::Result;
use crate::mcmc::kernel::{draw_gamma, rw_update, AdaptiveScale, ChainKernel, KernelState};
use crate::model::families::{DataView, ModelFamily, OutcomeKind};
use crate::model::poisson::{shifted_negbin_logpmf, shifted_poisson_logpmf};
use crate::model::registry;
use crate::model::{logprior, FamilyKind, LatentState, ModelSpec, ParamVector, PriorSpec};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::ops::Range;

pub struct CountKernel {
    kind: FamilyKind,
    spec: ModelSpec,
    priors: PriorSpec,
    data: Dataset,
    init: ParamVector,
    negbin: bool,

    field_spec: Vec<usize>,
    field_group: Vec<usize>,
    field_count: Vec<usize>,
    spec_fields: Vec<Range<usize>>,

    a_scales: Vec<AdaptiveScale>,
    fe_scales: Vec<AdaptiveScale>,
    fe_names: Vec<String>,
}

fn eta_of(theta: &ParamVector, group: usize) -> f64 {
    if group == 0 {
        theta.alpha
    } else {
        theta.alpha + theta.beta[group - 1]
    }
}

fn field_logpmf(
    negbin: bool,
    field_group: &[usize],
    field_count: &[usize],
    theta: &ParamVector,
    field: usize,
    a: f64,
) -> f64 {
    let mu = (eta_of(theta, field_group[field]) + a).exp();
    let n = field_count[field] as u64;
    if negbin {
        shifted_negbin_logpmf(n, mu, theta.dispersion.expect("dispersion"))
            .unwrap_or(f64::NEG_INFINITY)
    } else {
        shifted_poisson_logpmf(n, mu).unwrap_or(f64::NEG_INFINITY)
    }
}

fn count_loglik(
    negbin: bool,
    field_spec: &[usize],
    field_group: &[usize],
    field_count: &[usize],
    theta: &ParamVector,
    latent: &LatentState,
) -> f64 {
    (0..field_spec.len())
        .map(|f| {
            field_logpmf(
                negbin,
                field_group,
                field_count,
                theta,
                f,
                latent.a[field_spec[f]],
            )
        })
        .sum()
}

impl CountKernel {
    pub fn new(
        family: &dyn ModelFamily,
        spec: &ModelSpec,
        priors: &PriorSpec,
        data: &Dataset,
        negbin: bool,
    ) -> Result<CountKernel> {
        let view = DataView::new(data, OutcomeKind::Count);
        let mut field_spec = Vec::new();
        let mut field_group = Vec::new();
        let mut field_count = Vec::new();
        let mut spec_fields = Vec::new();
        for (i, s) in view.specimens.iter().enumerate() {
            let start = field_spec.len();
            for f in &s.fields {
                field_spec.push(i);
                field_group.push(f.group);
                field_count.push(f.n);
            }
            spec_fields.push(start..field_spec.len());
        }
        let n = spec_fields.len();
        let mut fe_names: Vec<String> = ["alpha", "beta_tz", "beta_cin", "beta_carc"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        if negbin {
            fe_names.push("log_dispersion".to_string());
        }
        let fe_scales = fe_names
            .iter()
            .map(|_| AdaptiveScale::scalar(0.2))
            .collect();
        Ok(CountKernel {
            kind: family.kind(),
            spec: spec.clone(),
            priors: priors.clone(),
            data: data.clone(),
            init: family.initial_params(spec, data),
            negbin,
            field_spec,
            field_group,
            field_count,
            spec_fields,
            a_scales: (0..n).map(|_| AdaptiveScale::scalar(0.5)).collect(),
            fe_scales,
            fe_names,
        })
    }
}

impl ChainKernel for CountKernel {
    fn param_names(&self) -> Vec<String> {
        let family = registry::family(self.kind);
        family
            .params(&self.spec)
            .iter()
            .map(|d| d.name.clone())
            .collect()
    }

    fn set_adapt_targets(&mut self, scalar: f64, _block: f64) {
        for s in self.a_scales.iter_mut().chain(self.fe_scales.iter_mut()) {
            s.set_target(scalar);
        }
    }

    fn init_state(&self, _chain_id: usize, rng: &mut ChaCha12Rng) -> Result<KernelState> {
        let mut theta = self.init.clone();
        let jitter = |sd: f64, rng: &mut ChaCha12Rng| -> f64 {
            let z: f64 = rng.sample(StandardNormal);
            sd * z
        };
        theta.alpha += jitter(0.3, rng);
        for b in theta.beta.iter_mut() {
            *b += jitter(0.3, rng);
        }
        theta.tau2 = Some(theta.tau2.unwrap_or(0.05) * jitter(0.5, rng).exp());
        if self.negbin {
            theta.dispersion = Some(theta.dispersion.unwrap_or(2.0) * jitter(0.4, rng).exp());
        }
        Ok(KernelState {
            theta,
            latent: LatentState::zeros(self.spec_fields.len(), 1, None),
        })
    }

    fn step(&mut self, state: &mut KernelState, rng: &mut ChaCha12Rng, adapt: bool) {
        let CountKernel {
            priors,
            negbin,
            field_spec,
            field_group,
            field_count,
            spec_fields,
            a_scales,
            fe_scales,
            fe_names,
            ..
        } = self;
        let negbin = *negbin;
        let (a0, b0) = (priors.var_gamma_shape, priors.var_gamma_rate);
        let fe_prec = priors.fixed_effect_precision;

        // specimen effects: scalar Metropolis per specimen
        let tau2 = state.theta.tau2.expect("tau2");
        for i in 0..spec_fields.len() {
            let a = state.latent.a[i];
            let fields = spec_fields[i].clone();
            let theta = &state.theta;
            let local = |a: f64| -> f64 {
                fields
                    .clone()
                    .map(|f| field_logpmf(negbin, field_group, field_count, theta, f, a))
                    .sum::<f64>()
                    - a * a / (2.0 * tau2)
            };
            let cur = local(a);
            state.latent.a[i] = rw_update(rng, &mut a_scales[i], a, adapt, |p| local(p) - cur);
        }

        // specimen variance precision, conjugate
        let ss: f64 = state.latent.a.iter().map(|a| a * a).sum();
        let prec = draw_gamma(rng, a0 + state.latent.a.len() as f64 / 2.0, b0 + ss / 2.0);
        state.theta.tau2 = Some(1.0 / prec);

        // fixed effects and dispersion
        for (k, name) in fe_names.iter().enumerate() {
            match name.as_str() {
                "alpha" => {
                    let cur = state.theta.alpha;
                    let base = count_loglik(
                        negbin,
                        field_spec,
                        field_group,
                        field_count,
                        &state.theta,
                        &state.latent,
                    );
                    let theta = state.theta.clone();
                    let latent = &state.latent;
                    let new = rw_update(rng, &mut fe_scales[k], cur, adapt, |p| {
                        let mut cand = theta.clone();
                        cand.alpha = p;
                        count_loglik(negbin, field_spec, field_group, field_count, &cand, latent)
                            - base
                            - 0.5 * fe_prec * (p * p - cur * cur)
                    });
                    state.theta.alpha = new;
                }
                "log_dispersion" => {
                    let kappa = state.theta.dispersion.expect("dispersion");
                    let u = kappa.ln();
                    let base = count_loglik(
                        negbin,
                        field_spec,
                        field_group,
                        field_count,
                        &state.theta,
                        &state.latent,
                    );
                    let theta = state.theta.clone();
                    let latent = &state.latent;
                    // Gamma(a0,b0) prior on kappa plus the log-scale Jacobian
                    let prior = |k: f64| a0 * k.ln() - b0 * k;
                    let new_u = rw_update(rng, &mut fe_scales[k], u, adapt, |p| {
                        let kp = p.exp();
                        let mut cand = theta.clone();
                        cand.dispersion = Some(kp);
                        count_loglik(negbin, field_spec, field_group, field_count, &cand, latent)
                            - base
                            + prior(kp)
                            - prior(kappa)
                    });
                    state.theta.dispersion = Some(new_u.exp());
                }
                _ => {
                    // beta_g: only fields in group g contribute
                    let g = k;
                    let cur = state.theta.beta[g - 1];
                    let fields: Vec<usize> = (0..field_spec.len())
                        .filter(|&f| field_group[f] == g)
                        .collect();
                    let theta = state.theta.clone();
                    let latent = &state.latent;
                    let local = |beta: f64| -> f64 {
                        let mut t = theta.clone();
                        t.beta[g - 1] = beta;
                        fields
                            .iter()
                            .map(|&f| {
                                field_logpmf(
                                    negbin,
                                    field_group,
                                    field_count,
                                    &t,
                                    f,
                                    latent.a[field_spec[f]],
                                )
                            })
                            .sum()
                    };
                    let base = local(cur);
                    let new = rw_update(rng, &mut fe_scales[k], cur, adapt, |p| {
                        local(p) - base - 0.5 * fe_prec * (p * p - cur * cur)
                    });
                    state.theta.beta[g - 1] = new;
                }
            }
        }
    }

    fn draw(&self, state: &KernelState) -> Vec<f64> {
        let family = registry::family(self.kind);
        let layout = family.params(&self.spec);
        state.theta.pack(&layout).expect("layout matches state")
    }

    fn logpost_components(&self, state: &KernelState) -> Vec<(&'static str, f64)> {
        let family = registry::family(self.kind);
        let lp = logprior(family, &self.spec, &self.priors, &state.theta).unwrap_or(f64::NAN);
        let ll = family
            .loglik_conditional(&self.spec, &state.theta, &state.latent, &self.data)
            .unwrap_or(f64::NAN);
        let lz = family
            .latent_logdensity(&self.spec, &state.theta, &state.latent, &self.data)
            .unwrap_or(f64::NAN);
        vec![("prior", lp), ("loglik", ll), ("latent", lz)]
    }

    fn acceptance_rates(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self
            .fe_names
            .iter()
            .cloned()
            .zip(self.fe_scales.iter().map(|s| s.acceptance_rate()))
            .collect();
        let mean_a = self
            .a_scales
            .iter()
            .map(|s| s.acceptance_rate())
            .sum::<f64>()
            / self.a_scales.len().max(1) as f64;
        out.push(("specimen_effects".to_string(), mean_a));
        out
    }
}
