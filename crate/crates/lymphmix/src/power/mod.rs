//! One-way ANOVA power and sample size for the study design calculation,
//! with a Monte Carlo F-test oracle.

pub mod noncentral_f;

use crate::error::{Error, Result};
use crate::rng::{substream, StreamDomain};
use noncentral_f::noncentral_f_sf;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerScenario {
    pub group_means: Vec<f64>,
    pub within_sd: f64,
    pub n_per_group: usize,
    pub alpha: f64,
}

impl PowerScenario {
    pub fn new(group_means: Vec<f64>, within_sd: f64, n_per_group: usize) -> PowerScenario {
        PowerScenario {
            group_means,
            within_sd,
            n_per_group,
            alpha: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_means.len() < 2 {
            return Err(Error::Param(format!(
                "need at least 2 groups, got {}",
                self.group_means.len()
            )));
        }
        if !(self.within_sd > 0.0 && self.within_sd.is_finite()) {
            return Err(Error::Param(format!(
                "within-group SD must be positive, got {}",
                self.within_sd
            )));
        }
        if self.n_per_group < 2 {
            return Err(Error::Param(format!(
                "n_per_group must be at least 2, got {}",
                self.n_per_group
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Param(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.group_means.len()
    }
}

/// The sample-size "difference parameter": SD of the group means (divisor
/// k - 1, which reproduces the design calculation) divided by the
/// within-group SD.
pub fn difference_parameter(s: &PowerScenario) -> Result<f64> {
    if s.group_means.len() < 2 {
        return Err(Error::Param("need at least 2 group means".into()));
    }
    if !(s.within_sd > 0.0) {
        return Err(Error::Param("within-group SD must be positive".into()));
    }
    let k = s.group_means.len() as f64;
    let mean = s.group_means.iter().sum::<f64>() / k;
    let ss: f64 = s.group_means.iter().map(|m| (m - mean).powi(2)).sum();
    Ok((ss / (k - 1.0)).sqrt() / s.within_sd)
}

/// Power of the one-way F test: noncentral-F upper tail at the central-F
/// critical value, noncentrality n * sum((mu_i - mu_bar)^2) / sigma^2.
pub fn anova_power(s: &PowerScenario) -> Result<f64> {
    s.validate()?;
    let k = s.k() as f64;
    let n = s.n_per_group as f64;
    let d1 = k - 1.0;
    let d2 = k * (n - 1.0);
    let mean = s.group_means.iter().sum::<f64>() / k;
    let ss: f64 = s.group_means.iter().map(|m| (m - mean).powi(2)).sum();
    let lambda = n * ss / (s.within_sd * s.within_sd);
    let central =
        FisherSnedecor::new(d1, d2).map_err(|e| Error::Numerical(format!("F({d1},{d2}): {e}")))?;
    let f_crit = central.inverse_cdf(1.0 - s.alpha);
    noncentral_f_sf(f_crit, d1, d2, lambda)
}

/// Smallest per-group n reaching `target_power`.
pub fn required_n(s: &PowerScenario, target_power: f64) -> Result<usize> {
    if !(target_power > 0.0 && target_power < 1.0) {
        return Err(Error::Param(format!(
            "target power must lie in (0,1), got {target_power}"
        )));
    }
    let mut probe = s.clone();
    for n in 2..=1_000_000usize {
        probe.n_per_group = n;
        if anova_power(&probe)? >= target_power {
            return Ok(n);
        }
    }
    Err(Error::Numerical(
        "required sample size exceeds 1e6 per group".into(),
    ))
}

/// Monte Carlo oracle: simulates the one-way design `replicates` times and
/// reports the F-test rejection rate at `s.alpha`. Replicates run on
/// independent substreams, so the estimate is reproducible and
/// thread-count independent.
pub fn anova_power_simulated(s: &PowerScenario, replicates: usize, seed: u64) -> Result<f64> {
    s.validate()?;
    let k = s.k();
    let n = s.n_per_group;
    let d1 = (k - 1) as f64;
    let d2 = (k * (n - 1)) as f64;
    let central =
        FisherSnedecor::new(d1, d2).map_err(|e| Error::Numerical(format!("F({d1},{d2}): {e}")))?;
    let f_crit = central.inverse_cdf(1.0 - s.alpha);

    let rejections: usize = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(seed, StreamDomain::Oracle, rep as u64);
            let mut group_sums = vec![0.0f64; k];
            let mut total = 0.0;
            let mut values = Vec::with_capacity(k * n);
            for (g, &mu) in s.group_means.iter().enumerate() {
                for _ in 0..n {
                    let z: f64 = rng.sample(StandardNormal);
                    let y = mu + s.within_sd * z;
                    group_sums[g] += y;
                    total += y;
                    values.push(y);
                }
            }
            let grand = total / (k * n) as f64;
            let nf = n as f64;
            let ssb: f64 = group_sums
                .iter()
                .map(|gs| {
                    let gm = gs / nf;
                    nf * (gm - grand) * (gm - grand)
                })
                .sum();
            let mut ssw = 0.0;
            for (g, gs) in group_sums.iter().enumerate() {
                let gm = gs / nf;
                for &y in &values[g * n..(g + 1) * n] {
                    ssw += (y - gm) * (y - gm);
                }
            }
            let f = (ssb / d1) / (ssw / d2);
            usize::from(f > f_crit)
        })
        .sum();
    Ok(rejections as f64 / replicates as f64)
}
