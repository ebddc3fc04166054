//! Convergence diagnostics: split R-hat, Geyer initial-monotone-sequence
//! effective sample size, and autocorrelation tables.

use crate::stats::{mean, sample_var};

/// Autocorrelation of `x` at the given lag (biased denominator n, standard
/// for spectral estimates).
pub fn autocorr(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    if lag >= n {
        return 0.0;
    }
    let m = mean(x);
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, xi) in x.iter().enumerate() {
        let d = xi - m;
        den += d * d;
        if i + lag < n {
            num += d * (x[i + lag] - m);
        }
    }
    if den == 0.0 {
        f64::NAN
    } else {
        num / den
    }
}

/// Effective sample size by Geyer's initial monotone positive sequence:
/// ESS = n / (2 * sum of positive monotone pair sums - 1). Degenerate
/// (zero-variance) series report NaN.
pub fn geyer_ess(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return f64::NAN;
    }
    if sample_var(x) == 0.0 {
        return f64::NAN;
    }
    let max_pairs = (n - 1) / 2;
    let mut sum_pairs = 0.0;
    let mut prev = f64::INFINITY;
    for m in 0..max_pairs {
        let g = autocorr(x, 2 * m) + autocorr(x, 2 * m + 1);
        if g <= 0.0 {
            break;
        }
        // enforce monotone decrease
        let g = g.min(prev);
        prev = g;
        sum_pairs += g;
    }
    let tau = (2.0 * sum_pairs - 1.0).max(1e-12);
    n as f64 / tau
}

/// Split R-hat: each chain is halved, then the classical potential scale
/// reduction factor is computed over the 2m half-chains. Defined for a
/// single chain as well (its two halves are compared).
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let min_len = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let half = min_len / 2;
    if half < 2 {
        return f64::NAN;
    }
    let mut halves: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        halves.push(&c[..half]);
        halves.push(&c[half..2 * half]);
    }
    let n = half as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let vars: Vec<f64> = halves.iter().map(|h| sample_var(h)).collect();
    let b = n * sample_var(&means);
    let w = mean(&vars);
    if w == 0.0 {
        return f64::NAN;
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

/// Lag 1..=max_lag autocorrelations averaged across chains.
pub fn mean_autocorr(chains: &[Vec<f64>], max_lag: usize) -> Vec<f64> {
    (1..=max_lag)
        .map(|lag| {
            let vals: Vec<f64> = chains.iter().map(|c| autocorr(c, lag)).collect();
            mean(&vals)
        })
        .collect()
}
