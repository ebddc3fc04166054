//! Metropolis-within-Gibbs kernel for the Gaussian families. Latent effects
//! and precision parameters update conjugately; fixed effects (and free
//! delta multipliers, on the log scale) update by adaptive random-walk
//! Metropolis.

use crate::domain::Dataset;
use crate::error::Result;
use crate::mcmc::kernel::{
    draw_gamma, draw_normal, rw_update, AdaptiveScale, ChainKernel, KernelState,
};
use crate::model::families::{DataView, ModelFamily, OutcomeKind};
use crate::model::registry;
use crate::model::{
    logprior, DeltaGrouping, FamilyKind, LatentState, ModelSpec, ParamVector, PriorSpec,
};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::ops::Range;

pub struct GaussianKernel {
    kind: FamilyKind,
    spec: ModelSpec,
    priors: PriorSpec,
    data: Dataset,
    init: ParamVector,

    // flattened outcome data, specimen-major
    y: Vec<f64>,
    field_spec: Vec<usize>,
    field_group: Vec<usize>,
    field_fine: Vec<usize>,
    field_n: Vec<usize>,
    field_obs: Vec<Range<usize>>,
    spec_fields: Vec<Range<usize>>,

    three_level: bool,
    use_gamma: bool,
    n_delta: usize,

    scales: Vec<AdaptiveScale>,
    scale_names: Vec<String>,
}

impl GaussianKernel {
    pub fn new(
        family: &dyn ModelFamily,
        spec: &ModelSpec,
        priors: &PriorSpec,
        data: &Dataset,
    ) -> Result<GaussianKernel> {
        let kind = family.kind();
        let three_level = !matches!(kind, FamilyKind::PlaLmm);
        let use_gamma = matches!(kind, FamilyKind::VaConditional);
        let het = matches!(kind, FamilyKind::CircHet) && !spec.delta_equal;
        let n_delta = if het { spec.delta_grouping.n_free() } else { 0 };

        let view = DataView::new(data, family.outcome());
        let mut y = Vec::new();
        let mut field_spec = Vec::new();
        let mut field_group = Vec::new();
        let mut field_fine = Vec::new();
        let mut field_n = Vec::new();
        let mut field_obs = Vec::new();
        let mut spec_fields = Vec::new();
        for (i, s) in view.specimens.iter().enumerate() {
            let f_start = field_spec.len();
            for f in &s.fields {
                let start = y.len();
                if family.outcome() == OutcomeKind::Pla {
                    y.push(f.pla);
                } else {
                    y.extend(&f.ys);
                }
                field_spec.push(i);
                field_group.push(f.group);
                field_fine.push(f.fine);
                field_n.push(f.n);
                field_obs.push(start..y.len());
            }
            spec_fields.push(f_start..field_spec.len());
        }

        let mut scales = Vec::new();
        let mut scale_names = Vec::new();
        for name in ["alpha", "beta_tz", "beta_cin", "beta_carc"] {
            scales.push(AdaptiveScale::scalar(0.2));
            scale_names.push(name.to_string());
        }
        if use_gamma {
            scales.push(AdaptiveScale::scalar(0.5));
            scale_names.push("gamma".to_string());
        }
        for i in 0..n_delta {
            scales.push(AdaptiveScale::scalar(0.3));
            scale_names.push(format!("log_delta_{i}"));
        }

        Ok(GaussianKernel {
            kind,
            spec: spec.clone(),
            priors: priors.clone(),
            data: data.clone(),
            init: family.initial_params(spec, data),
            y,
            field_spec,
            field_group,
            field_fine,
            field_n,
            field_obs,
            spec_fields,
            three_level,
            use_gamma,
            n_delta,
            scales,
            scale_names,
        })
    }

    fn n_specimens(&self) -> usize {
        self.spec_fields.len()
    }

    fn n_fields(&self) -> usize {
        self.field_spec.len()
    }

    fn delta_of(&self, theta: &ParamVector, field: usize) -> f64 {
        if self.n_delta == 0 {
            return 1.0;
        }
        let d = theta.delta.as_ref().expect("delta present");
        match self.spec.delta_grouping {
            DeltaGrouping::Coarse => {
                let g = self.field_group[field];
                if g == 3 {
                    1.0
                } else {
                    d[g]
                }
            }
            DeltaGrouping::Fine => {
                let f = self.field_fine[field];
                if f == 5 {
                    1.0
                } else {
                    d[f]
                }
            }
        }
    }

    /// Fixed-effect mean of one field (excluding latent effects).
    fn fixed_mean(&self, theta: &ParamVector, field: usize) -> f64 {
        let g = self.field_group[field];
        let mut m = if g == 0 {
            theta.alpha
        } else {
            theta.alpha + theta.beta[g - 1]
        };
        if self.use_gamma {
            m += theta.gamma.unwrap_or(0.0) / self.field_n[field] as f64;
        }
        m
    }

    /// Residuals y - fixed - a - b, freshly computed.
    fn residuals(&self, state: &KernelState) -> Vec<f64> {
        let mut r = self.y.clone();
        for f in 0..self.n_fields() {
            let shift = self.fixed_mean(&state.theta, f)
                + state.latent.a[self.field_spec[f]]
                + if self.three_level {
                    state.latent.b[f]
                } else {
                    0.0
                };
            for o in self.field_obs[f].clone() {
                r[o] -= shift;
            }
        }
        r
    }
}

impl ChainKernel for GaussianKernel {
    fn param_names(&self) -> Vec<String> {
        let family = registry::family(self.kind);
        family
            .params(&self.spec)
            .iter()
            .map(|d| d.name.clone())
            .collect()
    }

    fn set_adapt_targets(&mut self, scalar: f64, _block: f64) {
        for s in &mut self.scales {
            s.set_target(scalar);
        }
    }

    fn init_state(&self, _chain_id: usize, rng: &mut ChaCha12Rng) -> Result<KernelState> {
        let mut theta = self.init.clone();
        let jitter = |rng: &mut ChaCha12Rng, sd: f64| -> f64 {
            let z: f64 = rng.sample(StandardNormal);
            sd * z
        };
        theta.alpha += jitter(rng, 0.3);
        for b in theta.beta.iter_mut() {
            *b += jitter(rng, 0.3);
        }
        if let Some(t) = theta.tau2 {
            theta.tau2 = Some(t * jitter(rng, 0.5).exp());
        }
        if self.three_level {
            if let Some(v) = theta.nu2 {
                theta.nu2 = Some(v * jitter(rng, 0.5).exp());
            }
        }
        if let Some(s) = theta.sigma2 {
            theta.sigma2 = Some(s * jitter(rng, 0.5).exp());
        }
        if self.use_gamma {
            theta.gamma = Some(theta.gamma.unwrap_or(0.0) + jitter(rng, 0.5));
        }
        if self.n_delta > 0 {
            let d = theta.delta.get_or_insert(vec![1.0; self.n_delta]);
            for v in d.iter_mut() {
                *v *= jitter(rng, 0.2).exp();
            }
        } else {
            theta.delta = None;
        }
        let latent = LatentState::zeros(
            self.n_specimens(),
            1,
            self.three_level.then_some(self.n_fields()),
        );
        Ok(KernelState { theta, latent })
    }

    fn step(&mut self, state: &mut KernelState, rng: &mut ChaCha12Rng, adapt: bool) {
        let (a0, b0) = (self.priors.var_gamma_shape, self.priors.var_gamma_rate);
        let fe_prec = self.priors.fixed_effect_precision;
        let sigma2 = state.theta.sigma2.expect("sigma2");
        let tau2 = state.theta.tau2.expect("tau2");

        // 1. specimen effects, conjugate given everything else
        for i in 0..self.n_specimens() {
            let mut sum_r = 0.0;
            let mut m = 0usize;
            for f in self.spec_fields[i].clone() {
                let base = self.fixed_mean(&state.theta, f)
                    + if self.three_level {
                        state.latent.b[f]
                    } else {
                        0.0
                    };
                for o in self.field_obs[f].clone() {
                    sum_r += self.y[o] - base;
                    m += 1;
                }
            }
            let prec = 1.0 / tau2 + m as f64 / sigma2;
            let mean = (sum_r / sigma2) / prec;
            state.latent.a[i] = draw_normal(rng, mean, 1.0 / prec);
        }

        // 2. field effects, conjugate
        if self.three_level {
            let nu2 = state.theta.nu2.expect("nu2");
            for f in 0..self.n_fields() {
                let fv = self.delta_of(&state.theta, f) * nu2;
                let base = self.fixed_mean(&state.theta, f) + state.latent.a[self.field_spec[f]];
                let mut sum_r = 0.0;
                for o in self.field_obs[f].clone() {
                    sum_r += self.y[o] - base;
                }
                let n = self.field_obs[f].len() as f64;
                let prec = 1.0 / fv + n / sigma2;
                let mean = (sum_r / sigma2) / prec;
                state.latent.b[f] = draw_normal(rng, mean, 1.0 / prec);
            }
        }

        // 3. precisions, conjugate
        let ss_a: f64 = state.latent.a.iter().map(|a| a * a).sum();
        let n = self.n_specimens() as f64;
        let prec_tau = draw_gamma(rng, a0 + n / 2.0, b0 + ss_a / 2.0);
        state.theta.tau2 = Some(1.0 / prec_tau);

        if self.three_level {
            let mut ss_b = 0.0;
            for f in 0..self.n_fields() {
                let d = self.delta_of(&state.theta, f);
                ss_b += state.latent.b[f] * state.latent.b[f] / d;
            }
            let prec_nu = draw_gamma(rng, a0 + self.n_fields() as f64 / 2.0, b0 + ss_b / 2.0);
            state.theta.nu2 = Some(1.0 / prec_nu);
        }

        let resid = self.residuals(state);
        let ss_e: f64 = resid.iter().map(|r| r * r).sum();
        let prec_e = draw_gamma(rng, a0 + self.y.len() as f64 / 2.0, b0 + ss_e / 2.0);
        state.theta.sigma2 = Some(1.0 / prec_e);
        let sigma2 = state.theta.sigma2.unwrap();

        // 4. fixed effects, random walk Metropolis on residual sums
        let mut resid = self.residuals(state);
        let mut scale_idx = 0;

        // alpha: common shift across all observations
        {
            let (sum_r, m) = (resid.iter().sum::<f64>(), resid.len() as f64);
            let alpha = state.theta.alpha;
            let new = rw_update(rng, &mut self.scales[scale_idx], alpha, adapt, |p| {
                let d = p - alpha;
                (2.0 * d * sum_r - m * d * d) / (2.0 * sigma2)
                    - 0.5 * fe_prec * (p * p - alpha * alpha)
            });
            if new != alpha {
                let d = new - alpha;
                state.theta.alpha = new;
                for r in resid.iter_mut() {
                    *r -= d;
                }
            }
            scale_idx += 1;
        }

        // group contrasts
        for g in 1..4usize {
            let mut sum_r = 0.0;
            let mut m = 0.0;
            for f in 0..self.n_fields() {
                if self.field_group[f] == g {
                    for o in self.field_obs[f].clone() {
                        sum_r += resid[o];
                        m += 1.0;
                    }
                }
            }
            let beta = state.theta.beta[g - 1];
            let new = rw_update(rng, &mut self.scales[scale_idx], beta, adapt, |p| {
                let d = p - beta;
                (2.0 * d * sum_r - m * d * d) / (2.0 * sigma2)
                    - 0.5 * fe_prec * (p * p - beta * beta)
            });
            if new != beta {
                let d = new - beta;
                state.theta.beta[g - 1] = new;
                for f in 0..self.n_fields() {
                    if self.field_group[f] == g {
                        for o in self.field_obs[f].clone() {
                            resid[o] -= d;
                        }
                    }
                }
            }
            scale_idx += 1;
        }

        // reciprocal-cluster-size covariate
        if self.use_gamma {
            let mut swr = 0.0;
            let mut sww = 0.0;
            for f in 0..self.n_fields() {
                let w = 1.0 / self.field_n[f] as f64;
                for o in self.field_obs[f].clone() {
                    swr += w * resid[o];
                    sww += w * w;
                }
            }
            let gamma = state.theta.gamma.unwrap_or(0.0);
            let new = rw_update(rng, &mut self.scales[scale_idx], gamma, adapt, |p| {
                let d = p - gamma;
                (2.0 * d * swr - d * d * sww) / (2.0 * sigma2)
                    - 0.5 * fe_prec * (p * p - gamma * gamma)
            });
            state.theta.gamma = Some(new);
            scale_idx += 1;
        }

        // free delta multipliers on the log scale (prior: Gamma on 1/delta)
        if self.n_delta > 0 {
            let nu2 = state.theta.nu2.expect("nu2");
            for k in 0..self.n_delta {
                let mut ss = 0.0;
                let mut cnt = 0.0;
                for f in 0..self.n_fields() {
                    let idx = match self.spec.delta_grouping {
                        DeltaGrouping::Coarse => self.field_group[f],
                        DeltaGrouping::Fine => self.field_fine[f],
                    };
                    let free = match self.spec.delta_grouping {
                        DeltaGrouping::Coarse => idx < 3,
                        DeltaGrouping::Fine => idx < 5,
                    };
                    if free && idx == k {
                        ss += state.latent.b[f] * state.latent.b[f];
                        cnt += 1.0;
                    }
                }
                let delta = state.theta.delta.as_ref().unwrap()[k];
                let u = delta.ln();
                // b-likelihood + Gamma(a0,b0) prior on 1/delta + log-scale
                // Jacobian; prior normalizing constants cancel in the ratio
                let log_target = |u: f64| {
                    let d = u.exp();
                    let p = 1.0 / d;
                    -0.5 * cnt * (d * nu2).ln() - ss / (2.0 * d * nu2) + (a0 - 1.0) * p.ln()
                        - b0 * p
                        - u
                };
                let cur = log_target(u);
                let new_u = rw_update(rng, &mut self.scales[scale_idx], u, adapt, |p| {
                    log_target(p) - cur
                });
                state.theta.delta.as_mut().unwrap()[k] = new_u.exp();
                scale_idx += 1;
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
        self.scale_names
            .iter()
            .cloned()
            .zip(self.scales.iter().map(|s| s.acceptance_rate()))
            .collect()
    }
}
