//! Synthetic-data generation: datasets drawn exactly from each model family
//! with known ground truth, plus the flat one-way sample used by the power
//! module's simulation oracle.

pub mod design;
pub mod presets;

use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::model::registry;
use crate::model::{ModelSpec, ParamVector};
use crate::rng::{substream, StreamDomain};
use design::DesignPreset;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Generating parameters: a parameter vector tied to the model spec it
/// belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueParams {
    pub spec: ModelSpec,
    pub theta: ParamVector,
}

impl TrueParams {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let family = registry::family(self.spec.family);
        family.validate(&self.spec, &self.theta)
    }
}

/// Draws a complete dataset from the stated generative model. Per-specimen
/// generation runs concurrently on independent substreams keyed by specimen
/// index, so results are identical for any thread count.
pub fn simulate_dataset(truth: &TrueParams, design: &DesignPreset, seed: u64) -> Result<Dataset> {
    truth.validate()?;
    if design.n_specimens() == 0 {
        return Err(Error::Spec("design has no specimens".into()));
    }
    let family = registry::family(truth.spec.family);
    let skeletons = design.expand(seed);
    let specimens: Vec<_> = skeletons
        .par_iter()
        .map(|skel| {
            let mut rng = substream(seed, StreamDomain::Specimen, skel.index as u64);
            family.simulate_specimen(&truth.spec, &truth.theta, skel, &mut rng)
        })
        .collect();
    Dataset::new(specimens)
}

/// Flat one-way Gaussian sample: `n_per_group` iid draws per group mean.
/// Returned group-major, matching the input order.
pub fn simulate_power_scenario(
    group_means: &[f64],
    within_sd: f64,
    n_per_group: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if group_means.len() < 2 {
        return Err(Error::Spec(format!(
            "need at least 2 groups, got {}",
            group_means.len()
        )));
    }
    if !(within_sd > 0.0 && within_sd.is_finite()) {
        return Err(Error::Spec(format!(
            "within_sd must be positive, got {within_sd}"
        )));
    }
    if n_per_group < 2 {
        return Err(Error::Spec(format!(
            "n_per_group must be at least 2, got {n_per_group}"
        )));
    }
    let mut rng = substream(seed, StreamDomain::Oracle, 0);
    Ok(group_means
        .iter()
        .map(|&m| {
            (0..n_per_group)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + within_sd * z
                })
                .collect()
        })
        .collect())
}

// ---- draw helpers shared by the family simulators ----

pub(crate) fn draw_normal(rng: &mut ChaCha12Rng, mean: f64, var: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + var.sqrt() * z
}

/// 1 + Poisson(mu).
pub(crate) fn draw_shifted_poisson(rng: &mut ChaCha12Rng, mu: f64) -> usize {
    if mu <= 0.0 {
        return 1;
    }
    let p = Poisson::new(mu).expect("positive rate");
    1 + p.sample(rng) as usize
}

/// 1 + NB(mean mu, dispersion kappa) via the gamma–Poisson mixture.
pub(crate) fn draw_shifted_negbin(rng: &mut ChaCha12Rng, mu: f64, kappa: f64) -> usize {
    if mu <= 0.0 {
        return 1;
    }
    let g = Gamma::new(kappa, mu / kappa).expect("positive gamma params");
    let rate = g.sample(rng);
    draw_shifted_poisson(rng, rate)
}

/// Keeps a simulated circularity strictly inside (0,1); the clamp fires
/// only for astronomically extreme Gaussian draws.
pub(crate) fn sigmoid_clamped(x: f64) -> f64 {
    let c = 1.0 / (1.0 + (-x).exp());
    c.clamp(1e-9, 1.0 - 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean;

    #[test]
    fn power_scenario_shape_and_means() {
        let groups = simulate_power_scenario(&[2.6, 5.0, 10.0], 7.5, 25, 11).unwrap();
        assert_eq!(groups.len(), 3);
        assert!(groups.iter().all(|g| g.len() == 25));
        let tol = 3.0 * 7.5 / 25f64.sqrt();
        for (g, &target) in groups.iter().zip(&[2.6, 5.0, 10.0]) {
            let m = mean(g);
            assert!((m - target).abs() < tol, "mean {m} vs {target}");
        }
    }

    #[test]
    fn power_scenario_degenerate_sd() {
        let groups = simulate_power_scenario(&[1.0, 2.0], 1e-12, 5, 3).unwrap();
        for (g, &target) in groups.iter().zip(&[1.0, 2.0]) {
            for x in g {
                assert!((x - target).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn power_scenario_rejects_bad_sizes() {
        assert!(simulate_power_scenario(&[1.0, 2.0], 1.0, 1, 3).is_err());
        assert!(simulate_power_scenario(&[1.0], 1.0, 5, 3).is_err());
        assert!(simulate_power_scenario(&[1.0, 2.0], 0.0, 5, 3).is_err());
    }
}
