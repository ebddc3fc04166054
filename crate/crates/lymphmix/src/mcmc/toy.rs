//! Validation targets with known posteriors, run through the same chain
//! driver as the real kernels: a conjugate normal-mean model and a
//! deliberately bimodal target for divergence checks.

use super::kernel::{rw_update, AdaptiveScale, ChainKernel, KernelState};
use crate::error::Result;
use crate::model::LatentState;
use crate::stats::{logsumexp, mean};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Normal-mean model with known variance and a normal prior; the posterior
/// is available in closed form.
pub struct ConjugateNormalKernel {
    pub data: Vec<f64>,
    pub data_var: f64,
    pub prior_mean: f64,
    pub prior_var: f64,
    scale: AdaptiveScale,
}

impl ConjugateNormalKernel {
    pub fn new(data: Vec<f64>, data_var: f64, prior_mean: f64, prior_var: f64) -> Self {
        ConjugateNormalKernel {
            data,
            data_var,
            prior_mean,
            prior_var,
            scale: AdaptiveScale::scalar(1.0),
        }
    }

    /// Closed-form posterior (mean, variance).
    pub fn posterior(&self) -> (f64, f64) {
        let n = self.data.len() as f64;
        let prec = 1.0 / self.prior_var + n / self.data_var;
        let m = (self.prior_mean / self.prior_var + n * mean(&self.data) / self.data_var) / prec;
        (m, 1.0 / prec)
    }

    fn log_target(&self, mu: f64) -> f64 {
        let mut v = -(mu - self.prior_mean) * (mu - self.prior_mean) / (2.0 * self.prior_var);
        for y in &self.data {
            v -= (y - mu) * (y - mu) / (2.0 * self.data_var);
        }
        v
    }
}

impl ChainKernel for ConjugateNormalKernel {
    fn param_names(&self) -> Vec<String> {
        vec!["mu".to_string()]
    }

    fn init_state(&self, chain_id: usize, rng: &mut ChaCha12Rng) -> Result<KernelState> {
        let z: f64 = rng.sample(StandardNormal);
        let mut theta = crate::model::ParamVector::default();
        theta.alpha = self.prior_mean + (1.0 + chain_id as f64) * z;
        Ok(KernelState {
            theta,
            latent: LatentState::zeros(0, 1, None),
        })
    }

    fn step(&mut self, state: &mut KernelState, rng: &mut ChaCha12Rng, adapt: bool) {
        let mu = state.theta.alpha;
        // sufficient statistics keep the target closure free of self
        let n = self.data.len() as f64;
        let sum: f64 = self.data.iter().sum();
        let (data_var, prior_mean, prior_var) = (self.data_var, self.prior_mean, self.prior_var);
        let log_target = move |m: f64| {
            -(m - prior_mean) * (m - prior_mean) / (2.0 * prior_var)
                - (n * m * m - 2.0 * m * sum) / (2.0 * data_var)
        };
        let cur = log_target(mu);
        state.theta.alpha = rw_update(rng, &mut self.scale, mu, adapt, |p| log_target(p) - cur);
    }

    fn draw(&self, state: &KernelState) -> Vec<f64> {
        vec![state.theta.alpha]
    }

    fn logpost_components(&self, state: &KernelState) -> Vec<(&'static str, f64)> {
        vec![("target", self.log_target(state.theta.alpha))]
    }

    fn acceptance_rates(&self) -> Vec<(String, f64)> {
        vec![("mu".to_string(), self.scale.acceptance_rate())]
    }
}

/// Two well-separated normal modes with a deliberately tiny fixed proposal:
/// chains initialized in different modes cannot mix, so split R-hat must
/// flag them.
pub struct BimodalStuckKernel {
    pub separation: f64,
    pub proposal_sd: f64,
}

impl BimodalStuckKernel {
    fn log_target(&self, x: f64) -> f64 {
        let s = self.separation;
        logsumexp(&[-(x - s) * (x - s) / 2.0, -(x + s) * (x + s) / 2.0])
    }
}

impl ChainKernel for BimodalStuckKernel {
    fn param_names(&self) -> Vec<String> {
        vec!["x".to_string()]
    }

    fn init_state(&self, chain_id: usize, _rng: &mut ChaCha12Rng) -> Result<KernelState> {
        let mut theta = crate::model::ParamVector::default();
        // alternate chains across the two modes
        theta.alpha = if chain_id % 2 == 0 {
            self.separation
        } else {
            -self.separation
        };
        Ok(KernelState {
            theta,
            latent: LatentState::zeros(0, 1, None),
        })
    }

    fn step(&mut self, state: &mut KernelState, rng: &mut ChaCha12Rng, _adapt: bool) {
        let x = state.theta.alpha;
        let z: f64 = rng.sample(StandardNormal);
        let p = x + self.proposal_sd * z;
        if super::kernel::metropolis_accept(rng, self.log_target(p) - self.log_target(x)) {
            state.theta.alpha = p;
        }
    }

    fn draw(&self, state: &KernelState) -> Vec<f64> {
        vec![state.theta.alpha]
    }

    fn logpost_components(&self, state: &KernelState) -> Vec<(&'static str, f64)> {
        vec![("target", self.log_target(state.theta.alpha))]
    }

    fn acceptance_rates(&self) -> Vec<(String, f64)> {
        vec![]
    }
}
