//! Reference parameter sets: study-scale estimates reused as simulation
//! ground truth, both as handy CLI presets and as the defaults filling in
//! outcomes a family does not itself model.

use crate::model::{FamilyKind, ModelSpec, ParamVector};

use super::TrueParams;

/// Reference truth for each family, mirroring the published study-scale
/// estimates (fixed-effect ratios, variance components).
pub fn reference_truth(kind: FamilyKind) -> TrueParams {
    let spec = ModelSpec::new(kind);
    let theta = match kind {
        FamilyKind::PlaLmm => ParamVector {
            alpha: 3.51,
            beta: [1.85, 0.28, -0.04],
            tau2: Some(1.20),
            sigma2: Some(8.63),
            ..Default::default()
        },
        FamilyKind::LvdPois => ParamVector {
            alpha: 1.34f64.ln(),
            beta: [2.37f64.ln(), 2.31f64.ln(), 3.71f64.ln()],
            tau2: Some(0.03),
            ..Default::default()
        },
        FamilyKind::LvdNegBin => ParamVector {
            alpha: 1.34f64.ln(),
            beta: [2.37f64.ln(), 2.31f64.ln(), 3.71f64.ln()],
            tau2: Some(0.03),
            dispersion: Some(2.0),
            ..Default::default()
        },
        FamilyKind::VaLmm => ParamVector {
            alpha: 7.0,
            beta: [0.53f64.ln(), 0.42f64.ln(), 0.26f64.ln()],
            tau2: Some(0.12),
            nu2: Some(0.22),
            sigma2: Some(1.02),
            ..Default::default()
        },
        FamilyKind::CircHet => ParamVector {
            alpha: (0.54f64 / 0.46).ln(),
            beta: [1.27f64.ln(), 1.37f64.ln(), 1.01f64.ln()],
            tau2: Some(0.05),
            nu2: Some(0.13),
            sigma2: Some(0.95),
            delta: Some(vec![0.85, 0.98, 0.91]),
            ..Default::default()
        },
        FamilyKind::VaConditional => ParamVector {
            alpha: 1.2,
            beta: [1.09f64.ln(), 0.91f64.ln(), 0.69f64.ln()],
            tau2: Some(0.12),
            nu2: Some(0.22),
            sigma2: Some(1.02),
            gamma: Some(19.7),
            ..Default::default()
        },
        FamilyKind::Joint => joint_reference_theta(),
    };
    TrueParams { spec, theta }
}

/// The joint-model reference estimates (posterior medians): loadings,
/// variance components, latent correlation, and fixed-effect ratios. The
/// intercepts are not published; they are chosen so group-level means match
/// the summary table (control-ectocervix mean LVD 2.34, log-area location
/// around exp(7) um^2).
pub fn joint_reference_theta() -> ParamVector {
    ParamVector {
        alpha: 7.0,
        beta: [0.54f64.ln(), 0.42f64.ln(), 0.26f64.ln()],
        alpha_n: Some(1.34f64.ln()),
        beta_n: Some([2.35f64.ln(), 2.34f64.ln(), 3.78f64.ln()]),
        lambda_a: Some(0.25),
        lambda_n: Some(-0.13),
        nu2: Some(0.19),
        sigma2: Some(1.01),
        rho: Some(-0.78),
        ..Default::default()
    }
}
