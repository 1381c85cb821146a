//! Random-walk Metropolis update of one state's duration coefficients.
//!
//! Only segments in the updated state carry `β_j`; every other factor of the
//! acceptance ratio cancels, so the products run over those segments alone.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::duration::{FeatureTable, Link};
use crate::error::{HsmmError, Result};
use crate::model::SegmentSequence;
use crate::sampler::config::Priors;
use crate::ztp::ln_pmf_unchecked;

/// Result of one Metropolis step.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaUpdate {
    pub beta: Vec<f64>,
    pub accepted: bool,
    /// The acceptance ratio was not finite; the proposal was rejected.
    pub nonfinite: bool,
    pub log_ratio: f64,
}

fn ln_prior_kernel(beta: &[f64], priors: &Priors) -> f64 {
    -beta
        .iter()
        .map(|b| (b - priors.beta_loc).powi(2))
        .sum::<f64>()
        / (2.0 * priors.beta_var)
}

/// Log Metropolis ratio `ln m` for moving state `state` from `current` to `proposal`.
pub fn beta_log_ratio(
    state: usize,
    seq: &SegmentSequence,
    features: &FeatureTable,
    current: &[f64],
    proposal: &[f64],
    link: Link,
    priors: &Priors,
) -> f64 {
    let mut ratio = ln_prior_kernel(proposal, priors) - ln_prior_kernel(current, priors);
    for (seg, start) in seq.segments().iter().zip(seq.starts()) {
        if seg.state != state {
            continue;
        }
        let tau = seg.duration as u64;
        let new = features.rate(proposal, start, link).value;
        let old = features.rate(current, start, link).value;
        ratio += ln_pmf_unchecked(tau, new) - ln_pmf_unchecked(tau, old);
    }
    ratio
}

/// Accepts or rejects `proposal` given a uniform draw `u`.
pub fn metropolis_decision(log_ratio: f64, u: f64) -> bool {
    log_ratio.is_finite() && u.ln() < log_ratio
}

/// Proposes `β* = β + z`, `z ~ N(0, κ² I)`, and applies the Metropolis rule.
#[allow(clippy::too_many_arguments)]
pub fn update_beta<R: Rng + ?Sized>(
    state: usize,
    seq: &SegmentSequence,
    features: &FeatureTable,
    current: &[f64],
    kappa: f64,
    link: Link,
    priors: &Priors,
    rng: &mut R,
) -> Result<BetaUpdate> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(HsmmError::Precondition(format!(
            "proposal scale must be positive, got {kappa}"
        )));
    }
    if current.len() != features.num_covariates() + 1 {
        return Err(HsmmError::InvalidParams(format!(
            "{} coefficients for {} covariates",
            current.len(),
            features.num_covariates()
        )));
    }
    let proposal: Vec<f64> = current
        .iter()
        .map(|b| {
            let z: f64 = StandardNormal.sample(rng);
            b + kappa * z
        })
        .collect();
    let log_ratio = beta_log_ratio(state, seq, features, current, &proposal, link, priors);
    let u: f64 = rng.random();
    let accepted = metropolis_decision(log_ratio, u);
    Ok(BetaUpdate {
        beta: if accepted { proposal } else { current.to_vec() },
        accepted,
        nonfinite: !log_ratio.is_finite(),
        log_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duration::CovariateSummary;
    use crate::model::Dataset;

    fn fixture() -> (SegmentSequence, FeatureTable) {
        let data = Dataset::new(
            vec![0.0; 14],
            (0..14).map(|t| vec![(t as f64 - 4.0) / 3.0]).collect(),
            Some(vec![0.5]),
        )
        .unwrap();
        let features = FeatureTable::new(&data, CovariateSummary::LastValue).unwrap();
        let seq = SegmentSequence::from_pairs(&[(0, 3), (1, 2), (0, 4)]).unwrap();
        (seq, features)
    }

    #[test]
    fn identical_proposal_has_unit_ratio() {
        let (seq, features) = fixture();
        let b = [1.0, 0.3];
        let r = beta_log_ratio(0, &seq, &features, &b, &b, Link::Exp, &Priors::default());
        assert_eq!(r, 0.0);
        assert!(metropolis_decision(r, 0.999_999));
    }

    #[test]
    fn absent_state_reduces_to_prior_ratio() {
        let (seq, features) = fixture();
        let p = Priors::default();
        let (cur, prop) = ([1.0, 0.3], [1.5, -0.2]);
        let r = beta_log_ratio(2, &seq, &features, &cur, &prop, Link::Exp, &p);
        let prior = -(1.5f64.powi(2) + 0.2f64.powi(2) - 1.0 - 0.3f64.powi(2)) / 20_000.0;
        assert!((r - prior).abs() < 1e-15);
    }

    #[test]
    fn other_states_do_not_enter_the_ratio() {
        let (seq, features) = fixture();
        let p = Priors::default();
        let (cur, prop) = ([1.0, 0.3], [1.2, 0.1]);
        let base = beta_log_ratio(0, &seq, &features, &cur, &prop, Link::Exp, &p);
        let extra = SegmentSequence::from_pairs(&[(0, 3), (1, 2), (0, 4), (1, 5)]).unwrap();
        let r = beta_log_ratio(0, &extra, &features, &cur, &prop, Link::Exp, &p);
        assert!((r - base).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_positive_scale() {
        let (seq, features) = fixture();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        assert!(update_beta(0, &seq, &features, &[0.0, 0.0], 0.0, Link::Exp, &Priors::default(), &mut rng).is_err());
    }
}
