//! Count kernels for the cluster size N: shifted Poisson (N = 1 + Poisson)
//! and the shifted negative-binomial comparison model.

use crate::error::{Error, Result};
use statrs::function::gamma::ln_gamma;

/// log P(N = n) for N ~ 1 + Poisson(mu), i.e. the Poisson log-pmf of n-1.
/// The unit offset exists because fields with zero vessels never enter the
/// data, so counts start at one.
pub fn shifted_poisson_logpmf(n: u64, mu: f64) -> Result<f64> {
    if n < 1 {
        return Err(Error::Param(format!(
            "shifted Poisson requires n >= 1, got {n}"
        )));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::Param(format!(
            "shifted Poisson requires mu >= 0, got {mu}"
        )));
    }
    let m = (n - 1) as f64;
    if mu == 0.0 {
        // degenerate at n = 1
        return Ok(if n == 1 { 0.0 } else { f64::NEG_INFINITY });
    }
    Ok(m * mu.ln() - mu - ln_gamma(m + 1.0))
}

/// log P(N = n) for N - 1 negative binomial with mean `mu` and dispersion
/// `kappa`, parameterized so Var(N-1) = mu + mu^2/kappa; kappa -> inf
/// recovers the shifted Poisson.
///
/// Evaluated as
///   sum_{j<m} ln1p(j/kappa) - ln m! + m ln mu - (kappa+m) ln1p(mu/kappa),
/// which stays exact for arbitrarily large kappa, where the naive
/// lnGamma(kappa+m) - lnGamma(kappa) form cancels catastrophically.
pub fn shifted_negbin_logpmf(n: u64, mu: f64, kappa: f64) -> Result<f64> {
    if n < 1 {
        return Err(Error::Param(format!("shifted NB requires n >= 1, got {n}")));
    }
    if !(mu >= 0.0 && mu.is_finite()) || !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::Param(format!(
            "shifted NB requires mu >= 0 and kappa > 0, got ({mu}, {kappa})"
        )));
    }
    let m = (n - 1) as f64;
    if mu == 0.0 {
        return Ok(if n == 1 { 0.0 } else { f64::NEG_INFINITY });
    }
    Ok(negbin_ln_rising(n, kappa) - ln_gamma(m + 1.0) + m * mu.ln()
        - (kappa + m) * (mu / kappa).ln_1p())
}

/// ln of Gamma(kappa+m) / (Gamma(kappa) kappa^m) for m = n - 1, as a stable
/// short sum of ln1p terms (m is a small count).
pub(crate) fn negbin_ln_rising(n: u64, kappa: f64) -> f64 {
    (0..n - 1).map(|j| (j as f64 / kappa).ln_1p()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_at_zero_rate() {
        assert_eq!(shifted_poisson_logpmf(1, 0.0).unwrap(), 0.0);
        assert_eq!(shifted_poisson_logpmf(2, 0.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn direct_pmf_value() {
        // log Poisson(2; 2) = 2 ln 2 - 2 - ln 2 = ln 2 - 2
        let expect = 2.0f64.ln() - 2.0;
        assert!((shifted_poisson_logpmf(3, 2.0).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_count() {
        assert!(shifted_poisson_logpmf(0, 1.0).is_err());
        assert!(shifted_negbin_logpmf(0, 1.0, 1.0).is_err());
    }

    #[test]
    fn normalizes_over_tail() {
        for mu in [0.1, 1.0, 5.0, 20.0] {
            let total: f64 = (1..=400)
                .map(|n| shifted_poisson_logpmf(n, mu).unwrap().exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "mu={mu} total={total}");
        }
    }

    #[test]
    fn negbin_normalizes_and_limits_to_poisson() {
        for (mu, kappa) in [(0.5, 0.7), (3.0, 1.5), (8.0, 4.0)] {
            let total: f64 = (1..=3000)
                .map(|n| shifted_negbin_logpmf(n, mu, kappa).unwrap().exp())
                .sum();
            assert!(
                (total - 1.0).abs() < 1e-10,
                "mu={mu} kappa={kappa} total={total}"
            );
        }
        // large kappa approaches the Poisson pmf
        for n in [1u64, 2, 5, 12] {
            let nb = shifted_negbin_logpmf(n, 3.0, 1e8).unwrap();
            let po = shifted_poisson_logpmf(n, 3.0).unwrap();
            assert!((nb - po).abs() < 1e-6, "n={n}: {nb} vs {po}");
        }
    }

    #[test]
    fn negbin_variance_matches_parameterization() {
        // E[m] = mu, Var[m] = mu + mu^2/kappa checked by direct summation
        let (mu, kappa) = (4.0, 2.0);
        let mut mean = 0.0;
        let mut second = 0.0;
        for n in 1..=4000u64 {
            let p = shifted_negbin_logpmf(n, mu, kappa).unwrap().exp();
            let m = (n - 1) as f64;
            mean += m * p;
            second += m * m * p;
        }
        let var = second - mean * mean;
        assert!((mean - mu).abs() < 1e-8);
        assert!((var - (mu + mu * mu / kappa)).abs() < 1e-6);
    }
}
