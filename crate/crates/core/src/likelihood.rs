//! Likelihood factors of the covariate-dependent HSMM.

use std::f64::consts::PI;

use crate::duration::FeatureTable;
use crate::error::{HsmmError, Result};
use crate::model::{Dataset, ModelParams, SegmentSequence};
use crate::ztp::ln_pmf_unchecked;

/// Gaussian emission family. Only the Gaussian ships; this is the seam for others.
pub trait EmissionFamily {
    fn ln_density(&self, y: f64, state: usize) -> f64;
}

impl EmissionFamily for crate::model::EmissionParams {
    fn ln_density(&self, y: f64, state: usize) -> f64 {
        gaussian_ln_density(y, self.mean(state), self.variance(state))
    }
}

#[inline]
pub(crate) fn gaussian_ln_density(y: f64, mu: f64, sigma2: f64) -> f64 {
    let d = y - mu;
    -0.5 * (2.0 * PI * sigma2).ln() - d * d / (2.0 * sigma2)
}

/// Sum of Gaussian log densities of a segment's observations.
///
/// An empty segment contributes 0.
pub fn emission_loglik(segment_obs: &[f64], mu: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(HsmmError::Domain(format!(
            "emission variance must be positive, got {sigma2}"
        )));
    }
    Ok(segment_obs
        .iter()
        .map(|&y| gaussian_ln_density(y, mu, sigma2))
        .sum())
}

/// The joint log-likelihood split into its factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikTerms {
    /// `ln ρ_{S_1}`.
    pub initial: f64,
    /// `Σ_q ln h(τ_q | φ_q)`.
    pub duration: f64,
    /// `Σ_{q≥2} ln p_{S_{q-1}, S_q}`.
    pub transition: f64,
    /// `Σ_q ln f(y_{τ_q} | μ_{S_q}, σ²_{S_q})`.
    pub emission: f64,
    /// Number of segment rates that hit a clamp.
    pub clamped_rates: usize,
}

impl LogLikTerms {
    pub fn total(&self) -> f64 {
        self.initial + self.duration + self.transition + self.emission
    }
}

/// Per-segment duration rates `φ_q`, evaluated from covariates observed before each segment.
pub fn segment_rates(
    params: &ModelParams,
    features: &FeatureTable,
    seq: &SegmentSequence,
) -> (Vec<f64>, usize) {
    let link = params.durations.link;
    let mut clamped = 0;
    let rates = seq
        .segments()
        .iter()
        .zip(seq.starts())
        .map(|(seg, start)| {
            let rate = features.rate(params.durations.row(seg.state), start, link);
            clamped += usize::from(rate.clamped);
            rate.value
        })
        .collect();
    (rates, clamped)
}

fn validate(params: &ModelParams, data: &Dataset, seq: &SegmentSequence) -> Result<()> {
    params.check_data(data)?;
    seq.check_against(data.len(), params.num_states())
}

/// Joint log-likelihood of data, states and durations, term by term.
pub fn joint_loglik_terms(
    params: &ModelParams,
    data: &Dataset,
    seq: &SegmentSequence,
) -> Result<LogLikTerms> {
    validate(params, data, seq)?;
    let features = FeatureTable::new(data, params.durations.summary)?;
    let (rates, clamped_rates) = segment_rates(params, &features, seq);
    let segs = seq.segments();
    let y = data.y();

    let initial = params.transitions.initial()[segs[0].state].ln();
    let mut duration = 0.0;
    let mut transition = 0.0;
    let mut emission = 0.0;
    let mut start = 0;
    for (q, seg) in segs.iter().enumerate() {
        duration += ln_pmf_unchecked(seg.duration as u64, rates[q]);
        if q > 0 {
            transition += params.transitions.prob(segs[q - 1].state, seg.state).ln();
        }
        emission += emission_loglik(
            &y[start..start + seg.duration],
            params.emission.mean(seg.state),
            params.emission.variance(seg.state),
        )?;
        start += seg.duration;
    }
    Ok(LogLikTerms {
        initial,
        duration,
        transition,
        emission,
        clamped_rates,
    })
}

/// Joint log-likelihood of data, states and durations.
pub fn joint_loglik(params: &ModelParams, data: &Dataset, seq: &SegmentSequence) -> Result<f64> {
    joint_loglik_terms(params, data, seq).map(|t| t.total())
}

/// Observation log-likelihood evaluated one time step at a time.
pub fn observation_loglik(params: &ModelParams, data: &Dataset, seq: &SegmentSequence) -> Result<f64> {
    validate(params, data, seq)?;
    Ok(data
        .y()
        .iter()
        .zip(seq.to_states())
        .map(|(&y, s)| params.emission.ln_density(y, s))
        .sum())
}

/// Log-likelihood of the semi-Markov state process (initial, transitions, durations).
pub fn state_process_loglik(
    params: &ModelParams,
    data: &Dataset,
    seq: &SegmentSequence,
) -> Result<f64> {
    let t = joint_loglik_terms(params, data, seq)?;
    Ok(t.initial + t.duration + t.transition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duration::{CovariateSummary, Link};
    use crate::model::{DurationModel, EmissionParams, TransitionMatrix};

    #[test]
    fn single_standard_normal_point() {
        let v = emission_loglik(&[0.0], 0.0, 1.0).unwrap();
        assert!((v + 0.918_938_533_204_672_7).abs() < 1e-15);
    }

    #[test]
    fn emission_is_additive_and_peaks_at_mean() {
        let (a, b) = (0.4, -1.3);
        let joint = emission_loglik(&[a, b], 0.2, 2.0).unwrap();
        let split = emission_loglik(&[a], 0.2, 2.0).unwrap() + emission_loglik(&[b], 0.2, 2.0).unwrap();
        assert!((joint - split).abs() < 1e-14);

        let y = [1.5, 1.5, 1.5];
        let at = emission_loglik(&y, 1.5, 1.0).unwrap();
        for mu in [1.4, 1.6, 0.0, 3.0] {
            assert!(emission_loglik(&y, mu, 1.0).unwrap() < at);
        }
    }

    #[test]
    fn empty_segment_and_bad_variance() {
        assert_eq!(emission_loglik(&[], 1.0, 1.0).unwrap(), 0.0);
        assert!(emission_loglik(&[1.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn single_segment_reduction() {
        let params = ModelParams::new(
            EmissionParams::new(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap(),
            TransitionMatrix::uniform(2).unwrap(),
            DurationModel::new(vec![vec![1.0, 0.5], vec![0.0, 0.0]], CovariateSummary::LastValue, Link::Exp)
                .unwrap(),
        )
        .unwrap();
        let data = Dataset::new(vec![0.1, -0.2, 0.3], vec![vec![0.4], vec![1.0], vec![2.0]], None).unwrap();
        let seq = SegmentSequence::from_pairs(&[(0, 3)]).unwrap();
        let phi = (1.0f64 + 0.5 * 0.4).exp();
        let expected = 0.5f64.ln()
            + ln_pmf_unchecked(3, phi)
            + emission_loglik(data.y(), 0.0, 1.0).unwrap();
        assert!((joint_loglik(&params, &data, &seq).unwrap() - expected).abs() < 1e-12);

        let bad = SegmentSequence::from_pairs(&[(0, 2)]).unwrap();
        assert!(matches!(
            joint_loglik(&params, &data, &bad),
            Err(HsmmError::InvalidSegments(_))
        ));
    }
}
