//! Zero-truncated Poisson duration distribution.
//!
//! `P(τ = k) = φ^k e^{-φ} / (k! (1 - e^{-φ}))` for `k ≥ 1`. Mean `φ / (1 - e^{-φ})`.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use statrs::function::factorial::ln_factorial;

use crate::error::{HsmmError, Result};

/// Below this rate draws use CDF inversion; above it, Poisson draws with rejection of zero.
const INVERSION_THRESHOLD: f64 = 1.0;

/// Largest rate for which the linear-space pmf recurrence starting at `k = 1` does not underflow.
const LINEAR_RECURRENCE_LIMIT: f64 = 500.0;

/// A zero-truncated Poisson distribution with rate `phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroTruncatedPoisson {
    phi: f64,
}

impl ZeroTruncatedPoisson {
    pub fn new(phi: f64) -> Result<Self> {
        check_rate(phi)?;
        Ok(Self { phi })
    }

    pub fn rate(&self) -> f64 {
        self.phi
    }

    pub fn mean(&self) -> f64 {
        ztp_mean(self.phi)
    }

    pub fn ln_pmf(&self, tau: u64) -> Result<f64> {
        ztp_ln_pmf(tau, self.phi)
    }

    pub fn pmf(&self, tau: u64) -> Result<f64> {
        ztp_pmf(tau, self.phi)
    }
}

impl Distribution<u64> for ZeroTruncatedPoisson {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        sample_unchecked(self.phi, rng)
    }
}

fn check_rate(phi: f64) -> Result<()> {
    if phi.is_finite() && phi > 0.0 {
        Ok(())
    } else {
        Err(HsmmError::Domain(format!(
            "zero-truncated Poisson rate must be finite and positive, got {phi}"
        )))
    }
}

/// `ln(1 - e^{-φ})`, accurate for small `φ`.
#[inline]
pub(crate) fn ln_truncation_norm(phi: f64) -> f64 {
    (-(-phi).exp_m1()).ln()
}

/// Log-density without argument checks. `tau ≥ 1`, `phi > 0`.
#[inline]
pub(crate) fn ln_pmf_unchecked(tau: u64, phi: f64) -> f64 {
    tau as f64 * phi.ln() - phi - ln_factorial(tau) - ln_truncation_norm(phi)
}

/// Log probability mass of a zero-truncated Poisson.
pub fn ztp_ln_pmf(tau: u64, phi: f64) -> Result<f64> {
    check_rate(phi)?;
    if tau == 0 {
        return Err(HsmmError::Domain(
            "zero-truncated Poisson has no mass at zero".into(),
        ));
    }
    Ok(ln_pmf_unchecked(tau, phi))
}

/// Probability mass of a zero-truncated Poisson.
pub fn ztp_pmf(tau: u64, phi: f64) -> Result<f64> {
    ztp_ln_pmf(tau, phi).map(f64::exp)
}

/// `φ / (1 - e^{-φ})`.
pub fn ztp_mean(phi: f64) -> f64 {
    phi / -(-phi).exp_m1()
}

/// Draws one duration.
pub fn ztp_sample<R: Rng + ?Sized>(phi: f64, rng: &mut R) -> Result<u64> {
    check_rate(phi)?;
    Ok(sample_unchecked(phi, rng))
}

fn sample_unchecked<R: Rng + ?Sized>(phi: f64, rng: &mut R) -> u64 {
    if phi < INVERSION_THRESHOLD {
        // Sequential search from k = 1; mean is below 1.6 so this terminates fast.
        let u: f64 = rng.random();
        let mut k = 1u64;
        let mut p = phi / phi.exp_m1();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= phi / k as f64;
            if p == 0.0 {
                break;
            }
            cdf += p;
        }
        k
    } else {
        let poisson = Poisson::new(phi).expect("rate validated");
        loop {
            let k: f64 = poisson.sample(rng);
            if k >= 1.0 {
                return k as u64;
            }
        }
    }
}

/// Smallest `d` such that the upper-tail mass `P(τ > d)` drops below `tail_tol`,
/// never exceeding `limit`.
///
/// Returns the cap and whether `limit` cut the support short of the tolerance.
pub fn ztp_support_cap(phi: f64, tail_tol: f64, limit: usize) -> (usize, bool) {
    if limit == 0 {
        return (0, true);
    }
    let target = 1.0 - tail_tol;
    let mut cdf = 0.0;
    if phi < LINEAR_RECURRENCE_LIMIT {
        let mut p = phi / phi.exp_m1();
        for d in 1..=limit {
            if d > 1 {
                p *= phi / d as f64;
            }
            cdf += p;
            if cdf >= target {
                return (d, false);
            }
        }
    } else {
        let ln_phi = phi.ln();
        let ln_norm = ln_truncation_norm(phi);
        let mut lp = ln_phi - phi - ln_norm;
        for d in 1..=limit {
            if d > 1 {
                lp += ln_phi - (d as f64).ln();
            }
            cdf += lp.exp();
            if cdf >= target {
                return (d, false);
            }
        }
    }
    (limit, true)
}
