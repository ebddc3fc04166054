//! The model-family strategy layer: every family implements [`ModelFamily`]
//! and is selected at runtime through the registry (or directly by
//! [`FamilyKind`]). A family owns its likelihood kernel, its marginal
//! likelihood strategy, its simulator, and its MCMC kernel.

mod counts;
mod joint;
mod pla;
mod simulate;
mod vessel;

pub use counts::{LvdNegBin, LvdPois};
pub use joint::Joint;
pub use pla::PlaLmm;
pub use vessel::{CircHet, VaConditional, VaLmm};

use super::{LatentState, ModelSpec, ParamDesc, ParamVector, PriorSpec};
use crate::domain::{Dataset, Specimen};
use crate::error::Result;
use crate::mcmc::kernel::ChainKernel;
use crate::quad::QuadSettings;
use crate::sim::design::SpecimenSkeleton;
use rand_chacha::ChaCha12Rng;

/// Which observed outcome a family models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeKind {
    /// Field-level %LA, untransformed.
    Pla,
    /// Field-level vessel count (LVD).
    Count,
    /// Vessel-level log area.
    LogArea,
    /// Vessel-level logit circularity.
    LogitCirc,
}

/// Latent-effect dimensions for a family on a given dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentDims {
    pub a_dim: usize,
    pub has_field_effects: bool,
}

/// One interchangeable model family.
pub trait ModelFamily: Send + Sync {
    /// Registry name (also the CLI `--family` value).
    fn name(&self) -> &'static str;

    fn kind(&self) -> super::FamilyKind;

    /// One-line description for `--list-families`.
    fn describe(&self) -> &'static str;

    /// Outcome the family models.
    fn outcome(&self) -> OutcomeKind;

    /// Ordered free-parameter layout under `spec`.
    fn params(&self, spec: &ModelSpec) -> Vec<ParamDesc>;

    /// Strict support check (variances positive, bounds respected).
    fn validate(&self, spec: &ModelSpec, theta: &ParamVector) -> Result<()>;

    fn latent_dims(&self, data: &Dataset) -> LatentDims;

    /// Log density of the observed outcomes given the latent effects.
    fn loglik_conditional(
        &self,
        spec: &ModelSpec,
        theta: &ParamVector,
        latent: &LatentState,
        data: &Dataset,
    ) -> Result<f64>;

    /// Log density of the latent effects given the parameters.
    fn latent_logdensity(
        &self,
        spec: &ModelSpec,
        theta: &ParamVector,
        latent: &LatentState,
        data: &Dataset,
    ) -> Result<f64>;

    /// Marginal log-likelihood with latent effects integrated out
    /// (analytically where Gaussian, by adaptive Gauss–Hermite otherwise).
    fn marginal_loglik(
        &self,
        spec: &ModelSpec,
        theta: &ParamVector,
        data: &Dataset,
        quad: &QuadSettings,
    ) -> Result<f64> {
        let view = DataView::new(data, self.outcome());
        self.marginal_loglik_view(spec, theta, &view, quad)
    }

    /// Same as [`ModelFamily::marginal_loglik`] on a prebuilt view; fitters
    /// call this in their inner loop.
    fn marginal_loglik_view(
        &self,
        spec: &ModelSpec,
        theta: &ParamVector,
        view: &DataView,
        quad: &QuadSettings,
    ) -> Result<f64>;

    /// Simulates all four outcomes for one specimen: the family's own
    /// outcome(s) from `theta`, the rest from the reference defaults, so
    /// every simulated dataset is complete and loadable.
    fn simulate_specimen(
        &self,
        spec: &ModelSpec,
        theta: &ParamVector,
        skel: &SpecimenSkeleton,
        rng: &mut ChaCha12Rng,
    ) -> Specimen;

    /// Moment-based starting values for the fitters.
    fn initial_params(&self, spec: &ModelSpec, data: &Dataset) -> ParamVector;

    /// Fresh per-chain MCMC kernel.
    fn make_kernel(
        &self,
        spec: &ModelSpec,
        priors: &PriorSpec,
        data: &Dataset,
    ) -> Result<Box<dyn ChainKernel>>;
}

/// One field flattened for fitting: coarse/fine group indices, cluster size,
/// %LA, and the transformed vessel-level values (empty for field-level
/// outcomes).
#[derive(Debug, Clone)]
pub struct FieldData {
    pub group: usize,
    pub fine: usize,
    pub n: usize,
    pub pla: f64,
    pub ys: Vec<f64>,
}

impl FieldData {
    pub fn sum_y(&self) -> f64 {
        self.ys.iter().sum()
    }

    pub fn sum_y2(&self) -> f64 {
        self.ys.iter().map(|y| y * y).sum()
    }
}

#[derive(Debug, Clone)]
pub struct SpecimenData {
    pub fields: Vec<FieldData>,
}

/// A dataset flattened for one outcome.
#[derive(Debug, Clone)]
pub struct DataView {
    pub specimens: Vec<SpecimenData>,
    pub n_fields: usize,
    /// Observation count for the modelled outcome (fields for field-level
    /// outcomes, vessels for vessel-level ones).
    pub n_obs: usize,
}

impl DataView {
    pub fn new(data: &Dataset, outcome: OutcomeKind) -> DataView {
        let mut n_fields = 0;
        let mut n_obs = 0;
        let specimens = data
            .specimens()
            .iter()
            .map(|s| {
                let fields = s
                    .fields
                    .iter()
                    .map(|f| {
                        n_fields += 1;
                        let ys: Vec<f64> = match outcome {
                            OutcomeKind::Pla | OutcomeKind::Count => Vec::new(),
                            OutcomeKind::LogArea => {
                                f.vessels.iter().map(|v| v.log_area()).collect()
                            }
                            OutcomeKind::LogitCirc => {
                                f.vessels.iter().map(|v| v.logit_circularity()).collect()
                            }
                        };
                        n_obs += match outcome {
                            OutcomeKind::Pla | OutcomeKind::Count => 1,
                            _ => ys.len(),
                        };
                        FieldData {
                            group: f.tissue.coarse().index(),
                            fine: f.tissue.fine_index(),
                            n: f.lvd(),
                            pla: f.pla,
                            ys,
                        }
                    })
                    .collect();
                SpecimenData { fields }
            })
            .collect();
        DataView {
            specimens,
            n_fields,
            n_obs,
        }
    }
}

/// Linear predictor for the coarse grouping: alpha plus the group contrast
/// (reference group 0 contributes nothing).
#[inline]
pub fn eta(alpha: f64, beta: &[f64; 3], group: usize) -> f64 {
    if group == 0 {
        alpha
    } else {
        alpha + beta[group - 1]
    }
}

/// Crude moment decomposition used for starting values.
pub(crate) struct MomentInit {
    pub alpha: f64,
    pub beta: [f64; 3],
    pub var_specimen: f64,
    pub var_field: f64,
    pub var_resid: f64,
}

fn group_means(view: &DataView, value: impl Fn(&FieldData) -> Vec<f64>) -> ([f64; 4], f64) {
    let mut sums = [0.0f64; 4];
    let mut counts = [0usize; 4];
    for s in &view.specimens {
        for f in &s.fields {
            for v in value(f) {
                sums[f.group] += v;
                counts[f.group] += 1;
            }
        }
    }
    let total: f64 = sums.iter().sum();
    let n: usize = counts.iter().sum();
    let grand = total / n.max(1) as f64;
    let mut means = [grand; 4];
    for g in 0..4 {
        if counts[g] > 0 {
            means[g] = sums[g] / counts[g] as f64;
        }
    }
    (means, grand)
}

fn variance_or(values: &[f64], fallback: f64) -> f64 {
    if values.len() < 2 {
        return fallback;
    }
    crate::stats::sample_var(values).max(1e-3)
}

/// Two-level moment init: one value per field.
pub(crate) fn moment_init_field_level(
    view: &DataView,
    value: impl Fn(&FieldData) -> f64 + Copy,
) -> MomentInit {
    let (means, _) = group_means(view, |f| vec![value(f)]);
    let mut spec_means = Vec::new();
    let mut within = Vec::new();
    for s in &view.specimens {
        let resid: Vec<f64> = s.fields.iter().map(|f| value(f) - means[f.group]).collect();
        spec_means.push(crate::stats::mean(&resid));
        if resid.len() > 1 {
            within.push(crate::stats::sample_var(&resid));
        }
    }
    let var_resid = if within.is_empty() {
        variance_or(&spec_means, 1.0)
    } else {
        crate::stats::mean(&within).max(1e-3)
    };
    let raw_spec = variance_or(&spec_means, 0.5);
    MomentInit {
        alpha: means[0],
        beta: [
            means[1] - means[0],
            means[2] - means[0],
            means[3] - means[0],
        ],
        var_specimen: (raw_spec - var_resid / 8.0).max(1e-3),
        var_field: 1e-3,
        var_resid,
    }
}

/// Three-level moment init: values per vessel.
pub(crate) fn moment_init_vessel_level(view: &DataView) -> MomentInit {
    let (means, _) = group_means(view, |f| f.ys.clone());
    let mut spec_means = Vec::new();
    let mut field_devs = Vec::new();
    let mut within = Vec::new();
    for s in &view.specimens {
        let mut f_means = Vec::new();
        for f in &s.fields {
            let resid: Vec<f64> = f.ys.iter().map(|y| y - means[f.group]).collect();
            f_means.push(crate::stats::mean(&resid));
            if resid.len() > 1 {
                within.push(crate::stats::sample_var(&resid));
            }
        }
        let d = crate::stats::mean(&f_means);
        spec_means.push(d);
        for fm in &f_means {
            field_devs.push(fm - d);
        }
    }
    let var_resid = if within.is_empty() {
        1.0
    } else {
        crate::stats::mean(&within).max(1e-3)
    };
    let raw_field = variance_or(&field_devs, 0.2);
    let var_field = (raw_field - var_resid / 5.0).max(1e-3);
    let raw_spec = variance_or(&spec_means, 0.2);
    MomentInit {
        alpha: means[0],
        beta: [
            means[1] - means[0],
            means[2] - means[0],
            means[3] - means[0],
        ],
        var_specimen: (raw_spec - raw_field / 8.0).max(1e-3),
        var_field,
        var_resid,
    }
}

/// Field-variance multiplier for the heteroscedastic circularity model;
/// carcinoma is the fixed reference at unity.
pub fn delta_multiplier(spec: &ModelSpec, delta: &[f64], field: &FieldData) -> f64 {
    if spec.delta_equal {
        return 1.0;
    }
    match spec.delta_grouping {
        super::DeltaGrouping::Coarse => {
            if field.group == 3 {
                1.0
            } else {
                delta[field.group]
            }
        }
        super::DeltaGrouping::Fine => {
            if field.fine == 5 {
                1.0
            } else {
                delta[field.fine]
            }
        }
    }
}
