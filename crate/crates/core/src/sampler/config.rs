use serde::{Deserialize, Serialize};

use crate::duration::{CovariateSummary, Link};
use crate::error::{HsmmError, Result};

/// Prior hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Priors {
    /// Normal prior mean of the emission means.
    pub mean_loc: f64,
    /// Normal prior variance of the emission means.
    pub mean_var: f64,
    /// Inverse-gamma shape of the emission variances.
    pub var_shape: f64,
    /// Inverse-gamma scale of the emission variances.
    pub var_scale: f64,
    /// Dirichlet concentration of the initial distribution.
    pub initial_concentration: f64,
    /// Dirichlet concentration of each transition row.
    pub transition_concentration: f64,
    /// Normal prior mean of each duration coefficient.
    pub beta_loc: f64,
    /// Normal prior variance of each duration coefficient.
    pub beta_var: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            mean_loc: 0.0,
            mean_var: 10_000.0,
            var_shape: 3.0,
            var_scale: 3.0,
            initial_concentration: 1.0,
            transition_concentration: 1.0,
            beta_loc: 0.0,
            beta_var: 10_000.0,
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("priors.mean_var", self.mean_var),
            ("priors.var_shape", self.var_shape),
            ("priors.var_scale", self.var_scale),
            ("priors.initial_concentration", self.initial_concentration),
            ("priors.transition_concentration", self.transition_concentration),
            ("priors.beta_var", self.beta_var),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(HsmmError::config(field, format!("must be positive, got {v}")));
            }
        }
        for (field, v) in [("priors.mean_loc", self.mean_loc), ("priors.beta_loc", self.beta_loc)] {
            if !v.is_finite() {
                return Err(HsmmError::config(field, "must be finite"));
            }
        }
        Ok(())
    }
}

/// Settings of one MCMC chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Total iterations, adaptive phase included.
    pub iterations: usize,
    /// Leading iterations used to tune the proposal scales, then discarded.
    pub adaptive_iterations: usize,
    /// Fraction of observations used by the emission updates each iteration.
    pub subsample_rate: f64,
    /// Starting random-walk scale for every state's coefficient vector.
    pub initial_proposal_scale: f64,
    /// Target acceptance rate of the coefficient proposals while adapting.
    pub target_acceptance: f64,
    /// Iterations per adaptation batch.
    pub adapt_interval: usize,
    pub priors: Priors,
    /// Optional global cap on segment durations considered by the block sampler.
    pub duration_cap: Option<usize>,
    /// Upper-tail mass of the duration distribution that may be ignored.
    pub support_tail: f64,
    /// Keep every `thin`-th post-adaptation draw.
    pub thin: usize,
    /// How covariate histories are reduced before entering the duration rate.
    pub covariate_summary: CovariateSummary,
    pub link: Link,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 24_000,
            adaptive_iterations: 4_000,
            subsample_rate: 1.0,
            initial_proposal_scale: 0.1,
            target_acceptance: 0.3,
            adapt_interval: 50,
            priors: Priors::default(),
            duration_cap: None,
            support_tail: 1e-10,
            thin: 1,
            covariate_summary: CovariateSummary::LastValue,
            link: Link::Exp,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(HsmmError::config("iterations", "must be positive"));
        }
        if self.adaptive_iterations >= self.iterations {
            return Err(HsmmError::config(
                "adaptive_iterations",
                format!(
                    "must be below iterations ({} >= {})",
                    self.adaptive_iterations, self.iterations
                ),
            ));
        }
        validate_rate(self.subsample_rate)?;
        if !(self.initial_proposal_scale.is_finite() && self.initial_proposal_scale > 0.0) {
            return Err(HsmmError::config("initial_proposal_scale", "must be positive"));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(HsmmError::config("target_acceptance", "must lie in (0, 1)"));
        }
        if self.adapt_interval == 0 {
            return Err(HsmmError::config("adapt_interval", "must be positive"));
        }
        if self.duration_cap == Some(0) {
            return Err(HsmmError::config("duration_cap", "must be at least 1"));
        }
        if !(self.support_tail > 0.0 && self.support_tail < 1.0) {
            return Err(HsmmError::config("support_tail", "must lie in (0, 1)"));
        }
        if self.thin == 0 {
            return Err(HsmmError::config("thin", "must be positive"));
        }
        self.covariate_summary.validate()?;
        self.priors.validate()
    }

    /// Number of draws a chain saves.
    pub fn saved_draws(&self) -> usize {
        (self.iterations - self.adaptive_iterations).div_ceil(self.thin)
    }
}

pub(crate) fn validate_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate <= 1.0 {
        Ok(())
    } else {
        Err(HsmmError::config(
            "subsample_rate",
            format!("must lie in (0, 1], got {rate}"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_application_run() {
        let c = SamplerConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.saved_draws(), 20_000);
        assert_eq!(c.priors.mean_var, 10_000.0);
        assert_eq!((c.priors.var_shape, c.priors.var_scale), (3.0, 3.0));
    }

    #[test]
    fn rejects_bad_fields_by_name() {
        let mut c = SamplerConfig {
            adaptive_iterations: 24_000,
            ..SamplerConfig::default()
        };
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("adaptive_iterations"), "{err}");
        c.adaptive_iterations = 10;
        c.subsample_rate = 0.0;
        assert!(c.validate().unwrap_err().to_string().contains("subsample_rate"));
        c.subsample_rate = 1.0;
        c.priors.beta_var = -1.0;
        assert!(c.validate().unwrap_err().to_string().contains("priors.beta_var"));
    }
}
