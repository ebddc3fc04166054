//! Bayesian fitting via adaptive Metropolis-within-Gibbs: chain driver,
//! convergence diagnostics, and posterior summaries.

pub mod diag;
pub mod kernel;
pub mod kernels;
pub mod summary;
pub mod toy;

use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::model::families::ModelFamily;
use crate::model::{ModelSpec, PriorSpec};
use crate::rng::{substream, StreamDomain};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Chain driver settings. The defaults mirror the study's run length
/// (burn-in 50,000; 50,000 further iterations thinned by 20) with four
/// chains so split R-hat is meaningful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub burn_in: usize,
    pub keep_iterations: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub seed: u64,
    /// Target acceptance rate for scalar random-walk updates.
    pub target_accept_scalar: f64,
    /// Target acceptance rate for block (multivariate) proposal sites.
    /// The default kernels update the bivariate specimen effect by an
    /// exact conditional draw plus a scalar Metropolis step, so only the
    /// scalar target is exercised there.
    pub target_accept_block: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            burn_in: 50_000,
            keep_iterations: 50_000,
            thin: 20,
            n_chains: 4,
            seed: 0,
            target_accept_scalar: 0.44,
            target_accept_block: 0.234,
        }
    }
}

impl ChainConfig {
    /// Scaled-down settings for desk-scale studies.
    pub fn desk(seed: u64) -> ChainConfig {
        ChainConfig {
            burn_in: 5_000,
            keep_iterations: 5_000,
            thin: 5,
            n_chains: 2,
            seed,
            ..ChainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin < 1 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.n_chains < 1 {
            return Err(Error::Config("need at least one chain".into()));
        }
        if !(self.target_accept_scalar > 0.0 && self.target_accept_scalar < 1.0)
            || !(self.target_accept_block > 0.0 && self.target_accept_block < 1.0)
        {
            return Err(Error::Config(
                "target acceptance rates must lie in (0,1)".into(),
            ));
        }
        Ok(())
    }

    /// Kept draws per chain.
    pub fn kept_per_chain(&self) -> usize {
        self.keep_iterations / self.thin
    }
}

/// Post-burn-in, thinned posterior draws with per-parameter diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct ChainResult {
    pub spec: ModelSpec,
    pub param_names: Vec<String>,
    /// Canonicalized draws: `chains[c][k][p]`.
    pub chains: Vec<Vec<Vec<f64>>>,
    /// Acceptance rates per update site, per chain.
    pub acceptance: Vec<Vec<(String, f64)>>,
    /// Total effective sample size per parameter (summed over chains).
    pub ess: Vec<f64>,
    /// Split R-hat per parameter.
    pub rhat: Vec<f64>,
    /// Mean autocorrelation (lags 1..=50) per parameter, averaged over
    /// chains.
    pub autocorr: Vec<Vec<f64>>,
    pub config: ChainConfig,
    /// True when `keep_iterations` was zero and only initialization states
    /// are returned.
    pub init_only: bool,
}

pub const AUTOCORR_MAX_LAG: usize = 50;

/// Runs the family's Metropolis-within-Gibbs kernel: `n_chains` independent
/// chains on dedicated RNG substreams (bit-reproducible for any thread
/// count), adaptation frozen after burn-in, draws thinned and
/// canonicalized.
pub fn run_mcmc(
    family: &dyn ModelFamily,
    spec: &ModelSpec,
    priors: &PriorSpec,
    data: &Dataset,
    config: &ChainConfig,
) -> Result<ChainResult> {
    spec.validate()?;
    priors.validate()?;
    if data.n_specimens() == 0 {
        return Err(Error::Dataset("cannot fit an empty dataset".into()));
    }
    run_chains(
        spec,
        &|_chain| family.make_kernel(spec, priors, data),
        config,
    )
}

/// Generic chain driver over any kernel factory (one fresh kernel per
/// chain, so adaptation state stays chain-local).
pub fn run_chains(
    spec: &ModelSpec,
    make_kernel: &(dyn Fn(usize) -> Result<Box<dyn kernel::ChainKernel>> + Sync),
    config: &ChainConfig,
) -> Result<ChainResult> {
    config.validate()?;

    let chain_outputs: Vec<Result<(Vec<Vec<f64>>, Vec<(String, f64)>)>> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| {
            let mut kernel = make_kernel(c)?;
            kernel.set_adapt_targets(config.target_accept_scalar, config.target_accept_block);
            let mut rng = substream(config.seed, StreamDomain::Chain, c as u64);
            let mut state = kernel.init_state(c, &mut rng)?;
            for (name, value) in kernel.logpost_components(&state) {
                if !value.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite log-posterior component '{name}' at initialization of chain {c}"
                    )));
                }
            }
            if config.keep_iterations == 0 {
                let mut draws = vec![kernel.draw(&state)];
                kernel.canonicalize_chain(&mut draws);
                return Ok((draws, kernel.acceptance_rates()));
            }
            for _ in 0..config.burn_in {
                kernel.step(&mut state, &mut rng, true);
            }
            let mut draws = Vec::with_capacity(config.kept_per_chain());
            for it in 0..config.keep_iterations {
                kernel.step(&mut state, &mut rng, false);
                if (it + 1) % config.thin == 0 {
                    draws.push(kernel.draw(&state));
                }
            }
            kernel.canonicalize_chain(&mut draws);
            Ok((draws, kernel.acceptance_rates()))
        })
        .collect();

    let mut chains = Vec::with_capacity(config.n_chains);
    let mut acceptance = Vec::with_capacity(config.n_chains);
    for out in chain_outputs {
        let (draws, acc) = out?;
        chains.push(draws);
        acceptance.push(acc);
    }

    let kernel = make_kernel(0)?;
    let param_names = kernel.param_names();
    let n_params = param_names.len();

    let mut ess = vec![f64::NAN; n_params];
    let mut rhat = vec![f64::NAN; n_params];
    let mut autocorr = vec![Vec::new(); n_params];
    let init_only = config.keep_iterations == 0;
    if !init_only {
        for p in 0..n_params {
            let series: Vec<Vec<f64>> = chains
                .iter()
                .map(|c| c.iter().map(|d| d[p]).collect())
                .collect();
            ess[p] = series.iter().map(|s| diag::geyer_ess(s)).sum();
            rhat[p] = diag::split_rhat(&series);
            autocorr[p] = diag::mean_autocorr(&series, AUTOCORR_MAX_LAG);
        }
    }

    Ok(ChainResult {
        spec: spec.clone(),
        param_names,
        chains,
        acceptance,
        ess,
        rhat,
        autocorr,
        config: config.clone(),
        init_only,
    })
}

impl ChainResult {
    /// Pooled draws of one parameter across chains.
    pub fn pooled(&self, param: usize) -> Vec<f64> {
        self.chains
            .iter()
            .flat_map(|c| c.iter().map(move |d| d[param]))
            .collect()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }
}
