//! Unconstrained reparameterization for the optimizer: log scale for
//! variance-type parameters, an algebraic (atanh-free) bounded map for
//! loadings, and a logit-scaled map for the latent correlation.

use crate::model::{ParamDesc, ParamKind};

#[derive(Debug, Clone, Copy)]
pub struct Bounds {
    pub lambda_bound: f64,
    pub rho_bound: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            lambda_bound: 10.0,
            rho_bound: 0.95,
        }
    }
}

/// natural -> unconstrained, one coordinate.
pub fn to_unconstrained(kind: ParamKind, x: f64, b: &Bounds) -> f64 {
    match kind {
        ParamKind::FixedEffect => x,
        ParamKind::Variance | ParamKind::VarianceMultiplier | ParamKind::Dispersion => x.ln(),
        ParamKind::Loading => {
            // inverse of x = L u / sqrt(1 + u^2)
            let t = (x / b.lambda_bound).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
            t / (1.0 - t * t).sqrt()
        }
        ParamKind::Correlation => {
            let t = ((x / b.rho_bound + 1.0) / 2.0).clamp(1e-15, 1.0 - 1e-15);
            (t / (1.0 - t)).ln()
        }
    }
}

/// unconstrained -> natural, one coordinate.
pub fn from_unconstrained(kind: ParamKind, u: f64, b: &Bounds) -> f64 {
    match kind {
        ParamKind::FixedEffect => u,
        ParamKind::Variance | ParamKind::VarianceMultiplier | ParamKind::Dispersion => u.exp(),
        ParamKind::Loading => b.lambda_bound * u / (1.0 + u * u).sqrt(),
        ParamKind::Correlation => {
            let s = 1.0 / (1.0 + (-u).exp());
            b.rho_bound * (2.0 * s - 1.0)
        }
    }
}

/// d(natural)/d(unconstrained), for delta-method standard errors.
pub fn jacobian(kind: ParamKind, u: f64, b: &Bounds) -> f64 {
    match kind {
        ParamKind::FixedEffect => 1.0,
        ParamKind::Variance | ParamKind::VarianceMultiplier | ParamKind::Dispersion => u.exp(),
        ParamKind::Loading => b.lambda_bound / (1.0 + u * u).powf(1.5),
        ParamKind::Correlation => {
            let s = 1.0 / (1.0 + (-u).exp());
            2.0 * b.rho_bound * s * (1.0 - s)
        }
    }
}

pub fn pack_unconstrained(layout: &[ParamDesc], natural: &[f64], b: &Bounds) -> Vec<f64> {
    layout
        .iter()
        .zip(natural)
        .map(|(d, &x)| to_unconstrained(d.kind, x, b))
        .collect()
}

pub fn unpack_unconstrained(layout: &[ParamDesc], u: &[f64], b: &Bounds) -> Vec<f64> {
    layout
        .iter()
        .zip(u)
        .map(|(d, &v)| from_unconstrained(d.kind, v, b))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_are_tight() {
        let b = Bounds::default();
        for (kind, values) in [
            (ParamKind::FixedEffect, vec![-3.0, 0.0, 2.5]),
            (ParamKind::Variance, vec![1e-6, 0.19, 8.63, 100.0]),
            (ParamKind::Dispersion, vec![0.1, 2.0, 50.0]),
            (ParamKind::Loading, vec![-9.5, -0.13, 0.0, 0.25, 9.9]),
            (ParamKind::Correlation, vec![-0.9, -0.78, 0.0, 0.5, 0.94]),
        ] {
            for x in values {
                let u = to_unconstrained(kind, x, &b);
                let back = from_unconstrained(kind, u, &b);
                assert!((back - x).abs() < 1e-12, "{kind:?}: {x} -> {u} -> {back}");
            }
        }
    }

    #[test]
    fn bounded_maps_respect_bounds() {
        let b = Bounds::default();
        for u in [-1e6, -5.0, 0.0, 5.0, 1e6] {
            let l = from_unconstrained(ParamKind::Loading, u, &b);
            assert!(l.abs() <= 10.0);
            let r = from_unconstrained(ParamKind::Correlation, u, &b);
            assert!(r.abs() <= 0.95);
        }
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let b = Bounds::default();
        let h = 1e-6;
        for kind in [
            ParamKind::Variance,
            ParamKind::Loading,
            ParamKind::Correlation,
        ] {
            for u in [-1.2, 0.3, 2.0] {
                let fd = (from_unconstrained(kind, u + h, &b)
                    - from_unconstrained(kind, u - h, &b))
                    / (2.0 * h);
                let an = jacobian(kind, u, &b);
                assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "{kind:?} at {u}");
            }
        }
    }
}
