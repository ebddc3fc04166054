//! Kernel for the joint family. Field effects and the two precisions update
//! conjugately; the bivariate specimen effects update as per-specimen
//! Metropolis blocks (exact target, no linearization); fixed effects and
//! loadings are scalar adaptive random walks; the latent correlation moves
//! on a bounded atanh-style transform with its Jacobian.

use crate::domain::Dataset;
use crate::error::Result;
use crate::mcmc::kernel::{
    draw_gamma, draw_normal, rw_update, AdaptiveScale, ChainKernel, KernelState,
};
use crate::model::families::{DataView, ModelFamily, OutcomeKind};
use crate::model::registry;
use crate::model::{logprior, FamilyKind, LatentState, ModelSpec, ParamVector, PriorSpec};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::ops::Range;

pub struct JointKernel {
    spec: ModelSpec,
    priors: PriorSpec,
    data: Dataset,
    init: ParamVector,

    // area-side observations (log areas), specimen-major
    y: Vec<f64>,
    field_spec: Vec<usize>,
    field_group: Vec<usize>,
    field_count: Vec<usize>,
    field_obs: Vec<Range<usize>>,
    spec_fields: Vec<Range<usize>>,

    a_scales: Vec<AdaptiveScale>,
    fe_scales: Vec<AdaptiveScale>,
    fe_names: Vec<String>,
    rho_scale: AdaptiveScale,
}

fn eta_a(theta: &ParamVector, group: usize) -> f64 {
    if group == 0 {
        theta.alpha
    } else {
        theta.alpha + theta.beta[group - 1]
    }
}

fn eta_n(theta: &ParamVector, group: usize) -> f64 {
    let alpha_n = theta.alpha_n.expect("alpha_n");
    let beta_n = theta.beta_n.expect("beta_n");
    if group == 0 {
        alpha_n
    } else {
        alpha_n + beta_n[group - 1]
    }
}

impl JointKernel {
    pub fn new(
        family: &dyn ModelFamily,
        spec: &ModelSpec,
        priors: &PriorSpec,
        data: &Dataset,
    ) -> Result<JointKernel> {
        let view = DataView::new(data, OutcomeKind::LogArea);
        let mut y = Vec::new();
        let mut field_spec = Vec::new();
        let mut field_group = Vec::new();
        let mut field_count = Vec::new();
        let mut field_obs = Vec::new();
        let mut spec_fields = Vec::new();
        for (i, s) in view.specimens.iter().enumerate() {
            let start_f = field_spec.len();
            for f in &s.fields {
                let start = y.len();
                y.extend(&f.ys);
                field_spec.push(i);
                field_group.push(f.group);
                field_count.push(f.n);
                field_obs.push(start..y.len());
            }
            spec_fields.push(start_f..field_spec.len());
        }
        let n = spec_fields.len();
        let fe_names: Vec<String> = [
            "alpha_a",
            "beta_a_tz",
            "beta_a_cin",
            "beta_a_carc",
            "alpha_n",
            "beta_n_tz",
            "beta_n_cin",
            "beta_n_carc",
            "lambda_a",
            "lambda_n",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        Ok(JointKernel {
            spec: spec.clone(),
            priors: priors.clone(),
            data: data.clone(),
            init: family.initial_params(spec, data),
            y,
            field_spec,
            field_group,
            field_count,
            field_obs,
            spec_fields,
            a_scales: (0..n).map(|_| AdaptiveScale::scalar(0.6)).collect(),
            fe_scales: (0..10).map(|_| AdaptiveScale::scalar(0.15)).collect(),
            fe_names,
            rho_scale: AdaptiveScale::scalar(0.3),
        })
    }
}

impl ChainKernel for JointKernel {
    fn param_names(&self) -> Vec<String> {
        let family = registry::family(FamilyKind::Joint);
        family
            .params(&self.spec)
            .iter()
            .map(|d| d.name.clone())
            .collect()
    }

    fn set_adapt_targets(&mut self, scalar: f64, _block: f64) {
        for s in self
            .a_scales
            .iter_mut()
            .chain(self.fe_scales.iter_mut())
            .chain(std::iter::once(&mut self.rho_scale))
        {
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
        theta.alpha_n = Some(theta.alpha_n.unwrap_or(0.3) + jitter(0.3, rng));
        if let Some(bn) = theta.beta_n.as_mut() {
            for b in bn.iter_mut() {
                *b += jitter(0.3, rng);
            }
        }
        // keep the canonical orientation (positive area loading, negative
        // count loading) so chains start in one reflection basin
        theta.lambda_a = Some(theta.lambda_a.unwrap_or(0.3).abs() * jitter(0.4, rng).exp());
        theta.lambda_n = Some(-theta.lambda_n.unwrap_or(-0.15).abs() * jitter(0.4, rng).exp());
        theta.nu2 = Some(theta.nu2.unwrap_or(0.2) * jitter(0.5, rng).exp());
        theta.sigma2 = Some(theta.sigma2.unwrap_or(1.0) * jitter(0.5, rng).exp());
        if self.spec.rho_zero {
            theta.rho = None;
        } else {
            theta.rho = Some((jitter(0.3, rng)).clamp(-0.9, 0.9));
        }
        Ok(KernelState {
            theta,
            latent: LatentState::zeros(self.spec_fields.len(), 2, Some(self.field_spec.len())),
        })
    }

    fn step(&mut self, state: &mut KernelState, rng: &mut ChaCha12Rng, adapt: bool) {
        let JointKernel {
            spec,
            priors,
            y,
            field_spec,
            field_group,
            field_count,
            field_obs,
            spec_fields,
            a_scales,
            fe_scales,
            fe_names,
            rho_scale,
            ..
        } = self;
        let (a0, b0) = (priors.var_gamma_shape, priors.var_gamma_rate);
        let fe_prec = priors.fixed_effect_precision;
        let lambda_bound = priors.lambda_bound;
        let rho_bound = priors.rho_bound;
        let n_spec = spec_fields.len();
        let n_fields = field_spec.len();

        let sigma2 = state.theta.sigma2.expect("sigma2");
        let nu2 = state.theta.nu2.expect("nu2");
        let la = state.theta.lambda_a.expect("lambda_a");

        // 1. field effects (area side), conjugate
        for f in 0..n_fields {
            let i = field_spec[f];
            let base = eta_a(&state.theta, field_group[f]) + la * state.latent.a[2 * i];
            let mut sum_r = 0.0;
            for o in field_obs[f].clone() {
                sum_r += y[o] - base;
            }
            let m = field_obs[f].len() as f64;
            let prec = 1.0 / nu2 + m / sigma2;
            state.latent.b[f] = draw_normal(rng, (sum_r / sigma2) / prec, 1.0 / prec);
        }

        // 2. precisions, conjugate
        let mut ss_e = 0.0;
        for f in 0..n_fields {
            let i = field_spec[f];
            let base = eta_a(&state.theta, field_group[f])
                + la * state.latent.a[2 * i]
                + state.latent.b[f];
            for o in field_obs[f].clone() {
                let r = y[o] - base;
                ss_e += r * r;
            }
        }
        let prec_e = draw_gamma(rng, a0 + y.len() as f64 / 2.0, b0 + ss_e / 2.0);
        state.theta.sigma2 = Some(1.0 / prec_e);
        let sigma2 = state.theta.sigma2.unwrap();

        let ss_b: f64 = state.latent.b.iter().map(|b| b * b).sum();
        let prec_b = draw_gamma(rng, a0 + n_fields as f64 / 2.0, b0 + ss_b / 2.0);
        state.theta.nu2 = Some(1.0 / prec_b);

        // 3. bivariate specimen effects. The area-side component is
        // conditionally Gaussian given the count-side one, so it draws
        // exactly; the count-side component moves by scalar adaptive
        // Metropolis against its exact conditional (no linearization).
        let rho = if spec.rho_zero {
            0.0
        } else {
            state.theta.rho.unwrap_or(0.0)
        };
        let om = 1.0 - rho * rho;
        let lnl = state.theta.lambda_n.expect("lambda_n");
        for i in 0..n_spec {
            // area-side residual stats with the specimen term removed
            let mut sum_r = 0.0;
            let mut m = 0.0;
            // count-side stats
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for f in spec_fields[i].clone() {
                let base = eta_a(&state.theta, field_group[f]) + state.latent.b[f];
                for o in field_obs[f].clone() {
                    sum_r += y[o] - base;
                    m += 1.0;
                }
                s1 += (field_count[f] - 1) as f64;
                s2 += eta_n(&state.theta, field_group[f]).exp();
            }

            // a_A | a_N: normal with precision la^2 m / sigma2 + 1/(1-rho^2)
            let an = state.latent.a[2 * i + 1];
            let prec = la * la * m / sigma2 + 1.0 / om;
            let mean = (la * sum_r / sigma2 + rho * an / om) / prec;
            let aa = draw_normal(rng, mean, 1.0 / prec);
            state.latent.a[2 * i] = aa;

            // a_N | a_A: shifted-Poisson likelihood plus the conditional
            // normal prior N(rho a_A, 1 - rho^2)
            let local = |an: f64| -> f64 {
                let d = an - rho * aa;
                s1 * lnl * an - (lnl * an).exp() * s2 - d * d / (2.0 * om)
            };
            let cur = local(an);
            state.latent.a[2 * i + 1] =
                rw_update(rng, &mut a_scales[i], an, adapt, |p| local(p) - cur);
        }

        // 4. fixed effects and loadings, scalar adaptive random walks
        for (k, name) in fe_names.iter().enumerate() {
            match name.as_str() {
                "alpha_a" | "beta_a_tz" | "beta_a_cin" | "beta_a_carc" => {
                    let group = match name.as_str() {
                        "alpha_a" => None,
                        "beta_a_tz" => Some(1),
                        "beta_a_cin" => Some(2),
                        _ => Some(3),
                    };
                    let la = state.theta.lambda_a.expect("lambda_a");
                    let mut sum_r = 0.0;
                    let mut m = 0.0;
                    for f in 0..n_fields {
                        if group.is_none_or(|g| field_group[f] == g) {
                            let i = field_spec[f];
                            let base = eta_a(&state.theta, field_group[f])
                                + la * state.latent.a[2 * i]
                                + state.latent.b[f];
                            for o in field_obs[f].clone() {
                                sum_r += y[o] - base;
                                m += 1.0;
                            }
                        }
                    }
                    let cur = match group {
                        None => state.theta.alpha,
                        Some(g) => state.theta.beta[g - 1],
                    };
                    let new = rw_update(rng, &mut fe_scales[k], cur, adapt, |p| {
                        let d = p - cur;
                        (2.0 * d * sum_r - m * d * d) / (2.0 * sigma2)
                            - 0.5 * fe_prec * (p * p - cur * cur)
                    });
                    match group {
                        None => state.theta.alpha = new,
                        Some(g) => state.theta.beta[g - 1] = new,
                    }
                }
                "lambda_a" => {
                    let la = state.theta.lambda_a.expect("lambda_a");
                    // residuals without the specimen term, plus weighted sums
                    let mut swr = 0.0;
                    let mut sww = 0.0;
                    for f in 0..n_fields {
                        let i = field_spec[f];
                        let aa = state.latent.a[2 * i];
                        let base =
                            eta_a(&state.theta, field_group[f]) + la * aa + state.latent.b[f];
                        for o in field_obs[f].clone() {
                            let r = y[o] - base;
                            swr += aa * r;
                            sww += aa * aa;
                        }
                    }
                    let new = rw_update(rng, &mut fe_scales[k], la, adapt, |p| {
                        if p.abs() >= lambda_bound {
                            return f64::NEG_INFINITY;
                        }
                        let d = p - la;
                        (2.0 * d * swr - d * d * sww) / (2.0 * sigma2)
                    });
                    state.theta.lambda_a = Some(new);
                }
                "alpha_n" | "beta_n_tz" | "beta_n_cin" | "beta_n_carc" => {
                    let group = match name.as_str() {
                        "alpha_n" => None,
                        "beta_n_tz" => Some(1),
                        "beta_n_cin" => Some(2),
                        _ => Some(3),
                    };
                    let lnl = state.theta.lambda_n.expect("lambda_n");
                    let mut s1 = 0.0;
                    let mut smu = 0.0;
                    for f in 0..n_fields {
                        if group.is_none_or(|g| field_group[f] == g) {
                            let i = field_spec[f];
                            let mu = (eta_n(&state.theta, field_group[f])
                                + lnl * state.latent.a[2 * i + 1])
                                .exp();
                            s1 += (field_count[f] - 1) as f64;
                            smu += mu;
                        }
                    }
                    let cur = match group {
                        None => state.theta.alpha_n.expect("alpha_n"),
                        Some(g) => state.theta.beta_n.expect("beta_n")[g - 1],
                    };
                    let new = rw_update(rng, &mut fe_scales[k], cur, adapt, |p| {
                        let d = p - cur;
                        s1 * d - (d.exp() - 1.0) * smu - 0.5 * fe_prec * (p * p - cur * cur)
                    });
                    match group {
                        None => state.theta.alpha_n = Some(new),
                        Some(g) => {
                            let bn = state.theta.beta_n.as_mut().expect("beta_n");
                            bn[g - 1] = new;
                        }
                    }
                }
                "lambda_n" => {
                    let lnl = state.theta.lambda_n.expect("lambda_n");
                    // per-field (n-1, mu at current lambda, a_n)
                    let mut terms = Vec::with_capacity(n_fields);
                    for f in 0..n_fields {
                        let i = field_spec[f];
                        let an = state.latent.a[2 * i + 1];
                        let mu = (eta_n(&state.theta, field_group[f]) + lnl * an).exp();
                        terms.push(((field_count[f] - 1) as f64, mu, an));
                    }
                    let new = rw_update(rng, &mut fe_scales[k], lnl, adapt, |p| {
                        if p.abs() >= lambda_bound {
                            return f64::NEG_INFINITY;
                        }
                        let d = p - lnl;
                        terms
                            .iter()
                            .map(|&(m, mu, an)| m * d * an - mu * ((d * an).exp() - 1.0))
                            .sum()
                    });
                    state.theta.lambda_n = Some(new);
                }
                _ => unreachable!("unknown update site {name}"),
            }
        }

        // 5. latent correlation on the bounded transform
        if !spec.rho_zero {
            let rho = state.theta.rho.expect("rho");
            let mut saa = 0.0;
            let mut snn = 0.0;
            let mut san = 0.0;
            for i in 0..n_spec {
                let aa = state.latent.a[2 * i];
                let an = state.latent.a[2 * i + 1];
                saa += aa * aa;
                snn += an * an;
                san += aa * an;
            }
            let nf = n_spec as f64;
            // log target in u-space: bivariate normal likelihood of the
            // effects plus the transform Jacobian (the uniform prior is
            // constant inside the bounds)
            let log_target = move |u: f64| -> f64 {
                let r = rho_bound * u.tanh();
                let om = 1.0 - r * r;
                -0.5 * nf * om.ln() - (saa - 2.0 * r * san + snn) / (2.0 * om)
                    + (rho_bound * (1.0 - u.tanh() * u.tanh())).ln()
            };
            let u = (rho / rho_bound).atanh();
            let cur = log_target(u);
            let new_u = rw_update(rng, rho_scale, u, adapt, |p| log_target(p) - cur);
            state.theta.rho = Some(rho_bound * new_u.tanh());
        }
    }

    fn draw(&self, state: &KernelState) -> Vec<f64> {
        let family = registry::family(FamilyKind::Joint);
        let layout = family.params(&self.spec);
        state.theta.pack(&layout).expect("layout matches state")
    }

    /// Reflection folding. The posterior is exactly invariant under jointly
    /// flipping (lambda_a, lambda_n, a) and under flipping (lambda_n, a_n)
    /// with rho negated, so each draw's orbit has one representative in the
    /// quadrant lambda_a >= 0, lambda_n <= 0; every kept draw is folded to
    /// it. In the folded coordinates the sign of rho carries exactly the
    /// identified cross-moment lambda_a * lambda_n * rho, which the fold
    /// never changes.
    fn canonicalize_chain(&self, draws: &mut [Vec<f64>]) {
        let names = self.param_names();
        let idx = |n: &str| names.iter().position(|x| x == n);
        let (ia, inl) = match (idx("lambda_a"), idx("lambda_n")) {
            (Some(a), Some(b)) => (a, b),
            _ => return,
        };
        let ir = idx("rho");
        for d in draws.iter_mut() {
            if d[ia] < 0.0 {
                d[ia] = -d[ia];
                d[inl] = -d[inl];
            }
            if d[inl] > 0.0 {
                d[inl] = -d[inl];
                if let Some(ir) = ir {
                    d[ir] = -d[ir];
                }
            }
        }
    }

    fn logpost_components(&self, state: &KernelState) -> Vec<(&'static str, f64)> {
        let family = registry::family(FamilyKind::Joint);
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
        if !self.spec.rho_zero {
            out.push(("rho".to_string(), self.rho_scale.acceptance_rate()));
        }
        out
    }
}
