//! Reference computations for tests, written without the library under test.
//!
//! Everything here favors directness over speed: brute-force enumeration,
//! textbook formulas, bisection and power iteration.

pub mod enumeration;
pub mod fixtures;
pub mod gelman;
pub mod ks;

/// Arithmetic mean.
pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with an `n - 1` denominator.
pub fn variance(x: &[f64]) -> f64 {
    let mu = mean(x);
    x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Lag-one sample autocorrelation.
pub fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let mu = mean(x);
    let den: f64 = x.iter().map(|v| (v - mu) * (v - mu)).sum();
    let num: f64 = x.windows(2).map(|w| (w[0] - mu) * (w[1] - mu)).sum();
    num / den
}

/// `ln Σ exp(v)`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + v.iter().map(|x| (x - hi).exp()).sum::<f64>().ln()
}

/// Zero-truncated Poisson log-pmf, summing `ln k` for the factorial.
pub fn ztp_ln_pmf(tau: u64, phi: f64) -> f64 {
    let ln_fact: f64 = (2..=tau).map(|k| (k as f64).ln()).sum();
    tau as f64 * phi.ln() - phi - ln_fact - (-(-phi).exp_m1()).ln()
}

/// Gaussian log-density.
pub fn normal_ln_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * variance).ln() - (x - mean) * (x - mean) / (2.0 * variance)
}
