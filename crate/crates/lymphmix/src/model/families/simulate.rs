//! Shared outcome generators for the family simulators. Each family draws
//! its own outcome(s) from the supplied parameters and fills the rest from
//! the reference defaults, always in the same order (counts, %LA, areas,
//! circularities) so streams stay aligned.

use super::{delta_multiplier, eta};
use crate::domain::{Field, Specimen, TissueCode, Vessel};
use crate::model::FamilyKind;
use crate::model::{ModelSpec, ParamVector};
use crate::sim::design::SpecimenSkeleton;
use crate::sim::presets::reference_truth;
use crate::sim::{draw_normal, draw_shifted_negbin, draw_shifted_poisson, sigmoid_clamped};
use rand_chacha::ChaCha12Rng;

pub(crate) fn counts_from(
    theta: &ParamVector,
    negbin: bool,
    tissues: &[TissueCode],
    rng: &mut ChaCha12Rng,
) -> Vec<usize> {
    let tau2 = theta.tau2.unwrap_or(0.0);
    let a = draw_normal(rng, 0.0, tau2);
    tissues
        .iter()
        .map(|t| {
            let mu = (eta(theta.alpha, &theta.beta, t.coarse().index()) + a).exp();
            if negbin {
                draw_shifted_negbin(rng, mu, theta.dispersion.unwrap_or(1.0))
            } else {
                draw_shifted_poisson(rng, mu)
            }
        })
        .collect()
}

pub(crate) fn default_counts(tissues: &[TissueCode], rng: &mut ChaCha12Rng) -> Vec<usize> {
    counts_from(
        &reference_truth(FamilyKind::LvdPois).theta,
        false,
        tissues,
        rng,
    )
}

pub(crate) fn pla_from(
    theta: &ParamVector,
    tissues: &[TissueCode],
    rng: &mut ChaCha12Rng,
) -> Vec<f64> {
    let a = draw_normal(rng, 0.0, theta.tau2.unwrap_or(0.0));
    let sigma2 = theta.sigma2.unwrap_or(0.0);
    tissues
        .iter()
        .map(|t| {
            draw_normal(
                rng,
                eta(theta.alpha, &theta.beta, t.coarse().index()) + a,
                sigma2,
            )
        })
        .collect()
}

pub(crate) fn default_pla(tissues: &[TissueCode], rng: &mut ChaCha12Rng) -> Vec<f64> {
    pla_from(&reference_truth(FamilyKind::PlaLmm).theta, tissues, rng)
}

/// Vessel log-scale Gaussian outcome with nested effects; `gamma` adds the
/// reciprocal-cluster-size covariate, `delta_spec` enables the group
/// variance multipliers. Returns the raw Gaussian draws per field.
pub(crate) fn nested_gaussian_from(
    theta: &ParamVector,
    delta_spec: Option<&ModelSpec>,
    use_gamma: bool,
    tissues: &[TissueCode],
    counts: &[usize],
    rng: &mut ChaCha12Rng,
) -> Vec<Vec<f64>> {
    let a = draw_normal(rng, 0.0, theta.tau2.unwrap_or(0.0));
    let nu2 = theta.nu2.unwrap_or(0.0);
    let sigma2 = theta.sigma2.unwrap_or(0.0);
    tissues
        .iter()
        .zip(counts)
        .map(|(t, &n)| {
            let group = t.coarse().index();
            let fv = match delta_spec {
                Some(spec) => {
                    let field = super::FieldData {
                        group,
                        fine: t.fine_index(),
                        n,
                        pla: 0.0,
                        ys: vec![],
                    };
                    let ones = [1.0; 5];
                    let d: &[f64] = theta.delta.as_deref().unwrap_or(&ones);
                    delta_multiplier(spec, d, &field) * nu2
                }
                None => nu2,
            };
            let mut mean = eta(theta.alpha, &theta.beta, group) + a;
            if use_gamma {
                mean += theta.gamma.unwrap_or(0.0) / n as f64;
            }
            let b = draw_normal(rng, 0.0, fv);
            (0..n).map(|_| draw_normal(rng, mean + b, sigma2)).collect()
        })
        .collect()
}

pub(crate) fn default_areas(
    tissues: &[TissueCode],
    counts: &[usize],
    rng: &mut ChaCha12Rng,
) -> Vec<Vec<f64>> {
    let theta = reference_truth(FamilyKind::VaLmm).theta;
    nested_gaussian_from(&theta, None, false, tissues, counts, rng)
        .into_iter()
        .map(|f| f.into_iter().map(f64::exp).collect())
        .collect()
}

pub(crate) fn default_circs(
    tissues: &[TissueCode],
    counts: &[usize],
    rng: &mut ChaCha12Rng,
) -> Vec<Vec<f64>> {
    let truth = reference_truth(FamilyKind::CircHet);
    nested_gaussian_from(&truth.theta, Some(&truth.spec), false, tissues, counts, rng)
        .into_iter()
        .map(|f| f.into_iter().map(sigmoid_clamped).collect())
        .collect()
}

/// Stitches the four outcome vectors into a domain specimen.
pub(crate) fn assemble(
    skel: &SpecimenSkeleton,
    pla: Vec<f64>,
    areas: Vec<Vec<f64>>,
    circs: Vec<Vec<f64>>,
) -> Specimen {
    let fields = skel
        .fields
        .iter()
        .zip(pla)
        .zip(areas.into_iter().zip(circs))
        .enumerate()
        .map(|(j, ((tissue, pla), (areas, circs)))| {
            let vessels = areas
                .into_iter()
                .zip(circs)
                .map(|(area, circularity)| Vessel { area, circularity })
                .collect();
            Field {
                field_id: format!("F{:02}", j + 1),
                tissue: *tissue,
                pla,
                vessels,
            }
        })
        .collect();
    Specimen {
        specimen_id: skel.specimen_id.clone(),
        fields,
    }
}
