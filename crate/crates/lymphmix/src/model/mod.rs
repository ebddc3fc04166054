//! Model specifications, parameter vectors, priors, and the log-posterior
//! assembly shared by every family kernel.

pub mod families;
pub mod gaussian;
pub mod poisson;
pub mod registry;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// The model families. Every fitter and simulator selects its algorithm by
/// one of these (or, at the CLI boundary, by registry name).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// %LA linear mixed model: untransformed field-level outcome with a
    /// specimen random intercept.
    PlaLmm,
    /// Shifted-Poisson mixed model for LVD: N = 1 + Poisson(mu), log link.
    LvdPois,
    /// Shifted negative-binomial comparison model for LVD.
    LvdNegBin,
    /// Three-level LMM for log vessel area.
    VaLmm,
    /// Heteroscedastic three-level LMM for logit circularity with
    /// group-specific field-variance multipliers.
    CircHet,
    /// Log vessel area LMM with the observed reciprocal cluster size as an
    /// extra fixed covariate.
    VaConditional,
    /// Joint shared-random-effect model for log vessel area and LVD.
    Joint,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::PlaLmm => "pla_lmm",
            FamilyKind::LvdPois => "lvd_pois",
            FamilyKind::LvdNegBin => "lvd_negbin",
            FamilyKind::VaLmm => "va_lmm",
            FamilyKind::CircHet => "circ_het",
            FamilyKind::VaConditional => "va_conditional",
            FamilyKind::Joint => "joint",
        }
    }
}

/// Grouping of the circularity variance multipliers: coarse ties the three
/// CIN grades together, fine gives each grade its own multiplier (the
/// delta-split sensitivity model). Invasive carcinoma is fixed at unity for
/// identifiability in both cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaGrouping {
    #[default]
    Coarse,
    Fine,
}

impl DeltaGrouping {
    /// Number of free delta multipliers.
    pub fn n_free(self) -> usize {
        match self {
            DeltaGrouping::Coarse => 3,
            DeltaGrouping::Fine => 5,
        }
    }

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            DeltaGrouping::Coarse => &["ecto", "tz", "cin"],
            DeltaGrouping::Fine => &["ecto", "tz", "cin1", "cin2", "cin3"],
        }
    }
}

/// Which model to fit, plus constraint flags. Constraint flags are only
/// valid for the family that defines them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: FamilyKind,
    #[serde(default)]
    pub delta_grouping: DeltaGrouping,
    /// JOINT only: fix the latent correlation at zero.
    #[serde(default)]
    pub rho_zero: bool,
    /// CIRC_HET only: constrain all delta multipliers to unity.
    #[serde(default)]
    pub delta_equal: bool,
}

impl ModelSpec {
    pub fn new(family: FamilyKind) -> ModelSpec {
        ModelSpec {
            family,
            delta_grouping: DeltaGrouping::Coarse,
            rho_zero: false,
            delta_equal: false,
        }
    }

    pub fn with_rho_zero(mut self) -> ModelSpec {
        self.rho_zero = true;
        self
    }

    pub fn with_delta_equal(mut self) -> ModelSpec {
        self.delta_equal = true;
        self
    }

    pub fn with_fine_delta(mut self) -> ModelSpec {
        self.delta_grouping = DeltaGrouping::Fine;
        self
    }

    /// Checks that constraint flags match the family.
    pub fn validate(&self) -> Result<()> {
        if self.rho_zero && self.family != FamilyKind::Joint {
            return Err(Error::Spec(format!(
                "rho_zero constraint only applies to the joint family, not {}",
                self.family.name()
            )));
        }
        if (self.delta_equal || self.delta_grouping == DeltaGrouping::Fine)
            && self.family != FamilyKind::CircHet
        {
            return Err(Error::Spec(format!(
                "delta constraints only apply to circ_het, not {}",
                self.family.name()
            )));
        }
        Ok(())
    }
}

/// Named parameter set for one model. Fields not used by a family stay
/// `None`; the family layout decides what must be present.
///
/// For the joint family, `alpha`/`beta` belong to the vessel-area outcome
/// and `alpha_n`/`beta_n` to the count outcome. `beta` entries are ordered
/// (transformation zone, CIN, invasive carcinoma), all relative to the
/// control-ectocervix reference. The carcinoma delta multiplier is fixed at
/// unity and never stored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub alpha: f64,
    pub beta: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha_n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub beta_n: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tau2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nu2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma2: Option<f64>,
    /// Free delta multipliers: (ecto, tz, cin) coarse or five fine entries.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda_n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dispersion: Option<f64>,
}

/// Identifies one scalar entry of a [`ParamVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamId {
    Alpha,
    Beta(usize),
    AlphaN,
    BetaN(usize),
    Tau2,
    Nu2,
    Sigma2,
    Delta(usize),
    Gamma,
    LambdaA,
    LambdaN,
    Rho,
    Dispersion,
}

/// Statistical role of a parameter; drives both its prior and its
/// unconstrained reparameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Unbounded location parameter with a vague normal prior.
    FixedEffect,
    /// Positive variance component; Gamma prior on its precision, log
    /// transform for optimization.
    Variance,
    /// Positive variance multiplier (delta); treated like a variance.
    VarianceMultiplier,
    /// Loading bounded to (-L, L) with a uniform prior.
    Loading,
    /// Correlation bounded to (-r, r) with a uniform prior.
    Correlation,
    /// Positive dispersion with a Gamma prior, log transform.
    Dispersion,
}

#[derive(Debug, Clone)]
pub struct ParamDesc {
    pub id: ParamId,
    pub name: String,
    pub kind: ParamKind,
}

impl ParamDesc {
    pub fn new(id: ParamId, name: impl Into<String>, kind: ParamKind) -> ParamDesc {
        ParamDesc {
            id,
            name: name.into(),
            kind,
        }
    }
}

impl ParamVector {
    pub fn get(&self, id: ParamId) -> Result<f64> {
        let missing = |what: &str| Error::Param(format!("parameter {what} missing"));
        Ok(match id {
            ParamId::Alpha => self.alpha,
            ParamId::Beta(i) => self.beta[i],
            ParamId::AlphaN => self.alpha_n.ok_or_else(|| missing("alpha_n"))?,
            ParamId::BetaN(i) => self.beta_n.ok_or_else(|| missing("beta_n"))?[i],
            ParamId::Tau2 => self.tau2.ok_or_else(|| missing("tau2"))?,
            ParamId::Nu2 => self.nu2.ok_or_else(|| missing("nu2"))?,
            ParamId::Sigma2 => self.sigma2.ok_or_else(|| missing("sigma2"))?,
            ParamId::Delta(i) => *self
                .delta
                .as_ref()
                .and_then(|d| d.get(i))
                .ok_or_else(|| missing("delta"))?,
            ParamId::Gamma => self.gamma.ok_or_else(|| missing("gamma"))?,
            ParamId::LambdaA => self.lambda_a.ok_or_else(|| missing("lambda_a"))?,
            ParamId::LambdaN => self.lambda_n.ok_or_else(|| missing("lambda_n"))?,
            ParamId::Rho => self.rho.ok_or_else(|| missing("rho"))?,
            ParamId::Dispersion => self.dispersion.ok_or_else(|| missing("dispersion"))?,
        })
    }

    pub fn set(&mut self, id: ParamId, value: f64) {
        match id {
            ParamId::Alpha => self.alpha = value,
            ParamId::Beta(i) => self.beta[i] = value,
            ParamId::AlphaN => self.alpha_n = Some(value),
            ParamId::BetaN(i) => {
                let b = self.beta_n.get_or_insert([0.0; 3]);
                b[i] = value;
            }
            ParamId::Tau2 => self.tau2 = Some(value),
            ParamId::Nu2 => self.nu2 = Some(value),
            ParamId::Sigma2 => self.sigma2 = Some(value),
            ParamId::Delta(i) => {
                let d = self.delta.get_or_insert_with(Vec::new);
                if d.len() <= i {
                    d.resize(i + 1, 1.0);
                }
                d[i] = value;
            }
            ParamId::Gamma => self.gamma = Some(value),
            ParamId::LambdaA => self.lambda_a = Some(value),
            ParamId::LambdaN => self.lambda_n = Some(value),
            ParamId::Rho => self.rho = Some(value),
            ParamId::Dispersion => self.dispersion = Some(value),
        }
    }

    /// Packs the free parameters into a flat vector in layout order.
    pub fn pack(&self, layout: &[ParamDesc]) -> Result<Vec<f64>> {
        layout.iter().map(|d| self.get(d.id)).collect()
    }

    /// Writes a flat vector back through the layout.
    pub fn unpack(layout: &[ParamDesc], values: &[f64]) -> Result<ParamVector> {
        if layout.len() != values.len() {
            return Err(Error::Param(format!(
                "layout has {} entries, value vector has {}",
                layout.len(),
                values.len()
            )));
        }
        let mut theta = ParamVector::default();
        for (d, &v) in layout.iter().zip(values) {
            theta.set(d.id, v);
        }
        Ok(theta)
    }
}

/// Prior settings. Fixed effects get N(0, 1/precision) — the vague-prior
/// precision convention, so the default 1e-6 means variance 1e6. Variance
/// components get Gamma(shape, rate) priors on their precisions; loadings
/// and the latent correlation get uniform priors on (-bound, bound).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub fixed_effect_precision: f64,
    pub var_gamma_shape: f64,
    pub var_gamma_rate: f64,
    pub lambda_bound: f64,
    pub rho_bound: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            fixed_effect_precision: 1e-6,
            var_gamma_shape: 1e-3,
            var_gamma_rate: 1e-3,
            lambda_bound: 10.0,
            rho_bound: 0.95,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fixed_effect_precision > 0.0 && self.fixed_effect_precision.is_finite()) {
            return Err(Error::Spec(
                "fixed_effect_precision must be positive".into(),
            ));
        }
        if !(self.var_gamma_shape > 0.0 && self.var_gamma_rate > 0.0) {
            return Err(Error::Spec(
                "variance Gamma hyperparameters must be positive".into(),
            ));
        }
        if !(self.lambda_bound > 0.0 && self.lambda_bound.is_finite()) {
            return Err(Error::Spec(
                "lambda bound must be positive and finite".into(),
            ));
        }
        // strictly inside (-1,1) so the latent covariance stays nonsingular
        if !(self.rho_bound > 0.0 && self.rho_bound < 1.0) {
            return Err(Error::Spec(
                "rho bound must lie strictly inside (0,1)".into(),
            ));
        }
        Ok(())
    }

    /// Scales the vagueness hyperparameters by `factor`, for the prior
    /// sensitivity harness (x10, /10 reruns).
    pub fn scaled(&self, factor: f64) -> PriorSpec {
        PriorSpec {
            fixed_effect_precision: self.fixed_effect_precision * factor,
            var_gamma_shape: self.var_gamma_shape * factor,
            var_gamma_rate: self.var_gamma_rate * factor,
            lambda_bound: self.lambda_bound,
            rho_bound: self.rho_bound,
        }
    }
}

/// Latent effects for one dataset: `a` holds `a_dim` entries per specimen
/// (flattened, specimen-major); `b` holds one entry per field in dataset
/// order, empty for families without field effects.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub a: Vec<f64>,
    pub a_dim: usize,
    pub b: Vec<f64>,
}

impl LatentState {
    pub fn zeros(n_specimens: usize, a_dim: usize, n_fields: Option<usize>) -> LatentState {
        LatentState {
            a: vec![0.0; n_specimens * a_dim],
            a_dim,
            b: vec![0.0; n_fields.unwrap_or(0)],
        }
    }

    pub fn a_of(&self, specimen: usize) -> &[f64] {
        &self.a[specimen * self.a_dim..(specimen + 1) * self.a_dim]
    }
}

/// Log prior density of the free parameters under `priors`.
///
/// Gamma priors are evaluated on precisions (1/variance), the usual
/// convention of precision-parameterized Bayesian software; uniform priors
/// contribute constants inside their bounds and -inf outside. Returns -inf
/// (never an error) for out-of-support parameters.
pub fn logprior(
    family: &dyn families::ModelFamily,
    spec: &ModelSpec,
    priors: &PriorSpec,
    theta: &ParamVector,
) -> Result<f64> {
    use statrs::function::gamma::ln_gamma;
    let layout = family.params(spec);
    let mut total = 0.0;
    for desc in &layout {
        let x = theta.get(desc.id)?;
        if !x.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        let term = match desc.kind {
            ParamKind::FixedEffect => {
                let prec = priors.fixed_effect_precision;
                -0.5 * ((2.0 * std::f64::consts::PI / prec).ln() + prec * x * x)
            }
            ParamKind::Variance | ParamKind::VarianceMultiplier => {
                if x <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                let p = 1.0 / x;
                let (a, b) = (priors.var_gamma_shape, priors.var_gamma_rate);
                a * b.ln() - ln_gamma(a) + (a - 1.0) * p.ln() - b * p
            }
            ParamKind::Dispersion => {
                if x <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                let (a, b) = (priors.var_gamma_shape, priors.var_gamma_rate);
                a * b.ln() - ln_gamma(a) + (a - 1.0) * x.ln() - b * x
            }
            ParamKind::Loading => {
                let l = priors.lambda_bound;
                if x.abs() >= l {
                    return Ok(f64::NEG_INFINITY);
                }
                -(2.0 * l).ln()
            }
            ParamKind::Correlation => {
                let r = priors.rho_bound;
                if x.abs() >= r {
                    return Ok(f64::NEG_INFINITY);
                }
                -(2.0 * r).ln()
            }
        };
        total += term;
    }
    Ok(total)
}

/// Log posterior kernel: prior + conditional likelihood + latent density.
pub fn logpost(
    family: &dyn families::ModelFamily,
    spec: &ModelSpec,
    priors: &PriorSpec,
    theta: &ParamVector,
    latent: &LatentState,
    data: &crate::domain::Dataset,
) -> Result<f64> {
    let lp = logprior(family, spec, priors, theta)?;
    if lp == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let ll = family.loglik_conditional(spec, theta, latent, data)?;
    let lz = family.latent_logdensity(spec, theta, latent, data)?;
    Ok(lp + ll + lz)
}

/// Intra-cluster correlation: between / (between + residual).
pub fn icc(between_var: f64, residual_var: f64) -> Result<f64> {
    if !(between_var > 0.0 && residual_var > 0.0) {
        return Err(Error::Param(format!(
            "icc requires positive variances, got ({between_var}, {residual_var})"
        )));
    }
    Ok(between_var / (between_var + residual_var))
}

/// One row of the fixed-effect report.
#[derive(Debug, Clone, Serialize)]
pub struct EffectRow {
    pub outcome: String,
    pub group: String,
    pub coefficient: f64,
    /// exp(beta) for log/logit-linked outcomes, absent for raw ones.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    pub phrase: String,
}

const GROUP_LABELS: [&str; 3] = ["transformation_zone", "cin", "carcinoma"];

fn fold_phrase(ratio: f64) -> String {
    if (ratio - 1.0).abs() < 1e-12 {
        "no change".to_string()
    } else if ratio > 1.0 {
        format!("{:.2}-fold increase", ratio)
    } else {
        format!("{:.2}-fold reduction", 1.0 / ratio)
    }
}

/// Exponentiates beta for log/logit-linked outcomes, leaves %LA raw, and
/// reports fold-changes relative to the control-ectocervix reference.
pub fn effect_table(theta: &ParamVector, spec: &ModelSpec) -> Vec<EffectRow> {
    let mut rows = Vec::new();
    let mut push = |outcome: &str, linked: bool, beta: &[f64; 3]| {
        for (g, &b) in GROUP_LABELS.iter().zip(beta) {
            let ratio = linked.then(|| b.exp());
            rows.push(EffectRow {
                outcome: outcome.to_string(),
                group: g.to_string(),
                coefficient: b,
                ratio,
                phrase: match ratio {
                    Some(r) => fold_phrase(r),
                    None => format!("difference {b:+.2}"),
                },
            });
        }
    };
    match spec.family {
        FamilyKind::PlaLmm => push("pla", false, &theta.beta),
        FamilyKind::LvdPois | FamilyKind::LvdNegBin => push("lvd", true, &theta.beta),
        FamilyKind::VaLmm | FamilyKind::VaConditional => push("vessel_area", true, &theta.beta),
        FamilyKind::CircHet => push("circularity", true, &theta.beta),
        FamilyKind::Joint => {
            push("vessel_area", true, &theta.beta);
            if let Some(bn) = &theta.beta_n {
                push("lvd", true, bn);
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icc_worked_value() {
        // the within-specimen clustering effect for %LA
        let v = icc(1.20, 8.63).unwrap();
        assert!((v - 0.12207527975584943).abs() < 1e-12);
        assert!((v - 0.12).abs() < 0.005);
    }

    #[test]
    fn icc_symmetry_and_limits() {
        assert!((icc(3.7, 3.7).unwrap() - 0.5).abs() < 1e-15);
        assert!(icc(1e-12, 1.0).unwrap() < 1e-11);
        assert!(icc(0.0, 1.0).is_err());
        assert!(icc(1.0, -1.0).is_err());
    }

    #[test]
    fn effect_table_ratios() {
        let mut theta = ParamVector::default();
        theta.beta = [0.0, 0.0, 3.71f64.ln()];
        let spec = ModelSpec::new(FamilyKind::LvdPois);
        let rows = effect_table(&theta, &spec);
        assert_eq!(rows.len(), 3);
        assert!((rows[2].ratio.unwrap() - 3.71).abs() < 1e-12);
        assert_eq!(rows[0].ratio.unwrap(), 1.0);
        assert_eq!(rows[0].phrase, "no change");
    }

    #[test]
    fn effect_table_reduction_phrase() {
        let mut theta = ParamVector::default();
        theta.beta = [0.0, 0.0, 0.26f64.ln()];
        let spec = ModelSpec::new(FamilyKind::VaLmm);
        let rows = effect_table(&theta, &spec);
        assert_eq!(rows[2].phrase, "3.85-fold reduction");
    }

    #[test]
    fn pla_effects_stay_raw() {
        let mut theta = ParamVector::default();
        theta.beta = [1.85, 0.28, -0.04];
        let rows = effect_table(&theta, &ModelSpec::new(FamilyKind::PlaLmm));
        assert!(rows.iter().all(|r| r.ratio.is_none()));
    }

    #[test]
    fn constraint_flags_validated() {
        assert!(ModelSpec::new(FamilyKind::Joint)
            .with_rho_zero()
            .validate()
            .is_ok());
        assert!(ModelSpec::new(FamilyKind::VaLmm)
            .with_rho_zero()
            .validate()
            .is_err());
        assert!(ModelSpec::new(FamilyKind::CircHet)
            .with_delta_equal()
            .validate()
            .is_ok());
        assert!(ModelSpec::new(FamilyKind::LvdPois)
            .with_delta_equal()
            .validate()
            .is_err());
        assert!(ModelSpec::new(FamilyKind::PlaLmm)
            .with_fine_delta()
            .validate()
            .is_err());
    }
}
