//! The per-chain sampling kernel interface plus the shared update
//! primitives: the Metropolis accept rule, Robbins–Monro proposal-scale
//! adaptation, and conjugate draws.

use crate::error::Result;
use crate::model::{LatentState, ParamVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Mutable chain state shared by all kernels.
#[derive(Debug, Clone)]
pub struct KernelState {
    pub theta: ParamVector,
    pub latent: LatentState,
}

/// One family's Metropolis-within-Gibbs kernel. The engine creates one
/// kernel per chain (adaptation state is per-chain) and drives it through
/// burn-in and sampling.
pub trait ChainKernel: Send {
    /// Reported parameter names, in draw order.
    fn param_names(&self) -> Vec<String>;

    /// Applies the configured adaptation targets to the kernel's update
    /// sites (scalar random walks and, where present, block proposals).
    fn set_adapt_targets(&mut self, _scalar: f64, _block: f64) {}

    /// Overdispersed chain initialization.
    fn init_state(&self, chain_id: usize, rng: &mut ChaCha12Rng) -> Result<KernelState>;

    /// One full sweep over the update schedule. `adapt` is true during
    /// burn-in only; adaptation freezes afterwards to preserve the invariant
    /// distribution.
    fn step(&mut self, state: &mut KernelState, rng: &mut ChaCha12Rng, adapt: bool);

    /// Current parameter draw in `param_names` order.
    fn draw(&self, state: &KernelState) -> Vec<f64>;

    /// Reporting-convention canonicalization applied to a whole chain's
    /// draws (identity for most families; the joint family relabels
    /// sign-indeterminate loadings by the chain's majority orientation).
    fn canonicalize_chain(&self, _draws: &mut [Vec<f64>]) {}

    /// Log posterior at the state, by named component, for the
    /// initialization diagnostics.
    fn logpost_components(&self, state: &KernelState) -> Vec<(&'static str, f64)>;

    /// Acceptance rates per update site, for diagnostics.
    fn acceptance_rates(&self) -> Vec<(String, f64)>;
}

/// Metropolis accept decision for a log acceptance ratio. Exposed so the
/// detailed-balance smoke test exercises the same rule the kernels use.
#[inline]
pub fn metropolis_accept(rng: &mut ChaCha12Rng, log_ratio: f64) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    rng.random::<f64>().ln() < log_ratio
}

/// Robbins–Monro adaptation of a log proposal scale toward a target
/// acceptance rate (0.44 for scalar sites, 0.234 for blocks).
#[derive(Debug, Clone)]
pub struct AdaptiveScale {
    log_sd: f64,
    target: f64,
    updates: u64,
    accepted: u64,
    proposed: u64,
}

impl AdaptiveScale {
    pub fn new(init_sd: f64, target: f64) -> AdaptiveScale {
        AdaptiveScale {
            log_sd: init_sd.ln(),
            target,
            updates: 0,
            accepted: 0,
            proposed: 0,
        }
    }

    pub fn scalar(init_sd: f64) -> AdaptiveScale {
        AdaptiveScale::new(init_sd, 0.44)
    }

    pub fn block(init_sd: f64) -> AdaptiveScale {
        AdaptiveScale::new(init_sd, 0.234)
    }

    #[inline]
    pub fn sd(&self) -> f64 {
        self.log_sd.exp()
    }

    pub fn set_target(&mut self, target: f64) {
        self.target = target;
    }

    /// Records an acceptance probability; only moves the scale while
    /// `adapt` holds.
    pub fn record(&mut self, accept_prob: f64, accepted: bool, adapt: bool) {
        self.proposed += 1;
        if accepted {
            self.accepted += 1;
        }
        if adapt {
            self.updates += 1;
            let gain = (self.updates as f64).powf(-0.6);
            self.log_sd += gain * (accept_prob - self.target);
            self.log_sd = self.log_sd.clamp(-20.0, 10.0);
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// One adaptive random-walk Metropolis update of a scalar via a log target
/// difference. Returns the new value.
pub fn rw_update(
    rng: &mut ChaCha12Rng,
    scale: &mut AdaptiveScale,
    current: f64,
    adapt: bool,
    log_target_diff: impl FnOnce(f64) -> f64,
) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let proposal = current + scale.sd() * z;
    let diff = log_target_diff(proposal);
    let accept_prob = if diff.is_finite() {
        diff.min(0.0).exp()
    } else {
        0.0
    };
    let accepted = diff.is_finite() && metropolis_accept(rng, diff);
    scale.record(accept_prob, accepted, adapt);
    if accepted {
        proposal
    } else {
        current
    }
}

#[inline]
pub fn draw_normal(rng: &mut ChaCha12Rng, mean: f64, var: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + var.sqrt() * z
}

/// Gamma(shape, rate) draw (used for conjugate precision updates).
#[inline]
pub fn draw_gamma(rng: &mut ChaCha12Rng, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("positive gamma parameters")
        .sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, StreamDomain};

    #[test]
    fn adaptation_targets_acceptance() {
        // sampling N(0,1) with adaptation should settle near the 0.44 target
        let mut rng = substream(5, StreamDomain::Chain, 0);
        let mut scale = AdaptiveScale::scalar(10.0);
        let mut x = 0.0f64;
        for _ in 0..4000 {
            x = rw_update(&mut rng, &mut scale, x, true, |p| (x * x - p * p) / 2.0);
        }
        let mut scale_frozen = AdaptiveScale::scalar(scale.sd());
        for _ in 0..4000 {
            x = rw_update(&mut rng, &mut scale_frozen, x, false, |p| {
                (x * x - p * p) / 2.0
            });
        }
        let rate = scale_frozen.acceptance_rate();
        assert!((rate - 0.44).abs() < 0.08, "acceptance rate {rate}");
    }

    #[test]
    fn gamma_rate_convention() {
        // mean of Gamma(shape, rate) is shape/rate
        let mut rng = substream(9, StreamDomain::Chain, 1);
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| draw_gamma(&mut rng, 3.0, 2.0)).sum::<f64>() / n as f64;
        assert!((mean - 1.5).abs() < 0.05, "mean {mean}");
    }

    /// On a 3-state discretization of a known target, the Metropolis accept
    /// rule must leave the target stationary: started from the target
    /// distribution, one kernel step keeps state frequencies at the target
    /// within Monte Carlo error.
    #[test]
    fn detailed_balance_smoke() {
        let states = [-1.0f64, 0.0, 1.0];
        let logp = |i: usize| -states[i] * states[i]; // unnormalized
        let weights: Vec<f64> = (0..3).map(|i| logp(i).exp()).collect();
        let z: f64 = weights.iter().sum();
        let target: Vec<f64> = weights.iter().map(|w| w / z).collect();

        let mut rng = substream(17, StreamDomain::Chain, 2);
        let reps = 400_000;
        let mut counts = [0usize; 3];
        for r in 0..reps {
            // exact draw from the target, then one Metropolis step with a
            // symmetric random-neighbor proposal
            let u: f64 = rng.random();
            let mut i = if u < target[0] {
                0
            } else if u < target[0] + target[1] {
                1
            } else {
                2
            };
            let _ = r;
            let j = (i + if rng.random::<bool>() { 1 } else { 2 }) % 3;
            if metropolis_accept(&mut rng, logp(j) - logp(i)) {
                i = j;
            }
            counts[i] += 1;
        }
        for k in 0..3 {
            let freq = counts[k] as f64 / reps as f64;
            let se = (target[k] * (1.0 - target[k]) / reps as f64).sqrt();
            assert!(
                (freq - target[k]).abs() < 4.0 * se + 1e-4,
                "state {k}: freq {freq} target {}",
                target[k]
            );
        }
    }
}
