//! Conjugate full-conditional updates and per-iteration subsampling.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{HsmmError, Result};
use crate::model::{SegmentSequence, TransitionMatrix};
use crate::sampler::config::{validate_rate, Priors};

/// Draws from a Dirichlet distribution by normalizing independent gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive concentration").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter_mut().for_each(|d| *d /= total);
    } else {
        // Every variate underflowed; only possible for tiny concentrations.
        let a_sum: f64 = alpha.iter().sum();
        let mut u = rng.random::<f64>() * a_sum;
        let mut pick = alpha.len() - 1;
        for (i, &a) in alpha.iter().enumerate() {
            if u < a {
                pick = i;
                break;
            }
            u -= a;
        }
        draws.iter_mut().enumerate().for_each(|(i, d)| *d = f64::from(u8::from(i == pick)));
    }
    draws
}

/// Gibbs draw of the initial distribution given the first state.
pub fn update_rho<R: Rng + ?Sized>(
    first_state: usize,
    m: usize,
    concentration: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if first_state >= m {
        return Err(HsmmError::Precondition(format!(
            "first state {first_state} out of range for {m} states"
        )));
    }
    let alpha: Vec<f64> = (0..m)
        .map(|j| concentration + f64::from(u8::from(j == first_state)))
        .collect();
    Ok(sample_dirichlet(&alpha, rng))
}

/// Counts `n_{j,k}` of transitions between consecutive segments.
pub fn transition_counts(seq: &SegmentSequence, m: usize) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0; m]; m];
    for pair in seq.segments().windows(2) {
        counts[pair[0].state][pair[1].state] += 1;
    }
    counts
}

/// Gibbs draw of every transition row; each row is Dirichlet over the off-diagonal entries.
pub fn update_transition_rows<R: Rng + ?Sized>(
    seq: &SegmentSequence,
    current: &TransitionMatrix,
    concentration: f64,
    rng: &mut R,
) -> Result<TransitionMatrix> {
    let m = current.num_states();
    let counts = transition_counts(seq, m);
    let mut next = current.clone();
    for j in 0..m {
        let alpha: Vec<f64> = (0..m)
            .filter(|&k| k != j)
            .map(|k| counts[j][k] as f64 + concentration)
            .collect();
        let draw = sample_dirichlet(&alpha, rng);
        let mut row = vec![0.0; m];
        let mut it = draw.into_iter();
        for (k, slot) in row.iter_mut().enumerate() {
            if k != j {
                *slot = it.next().expect("m - 1 entries");
            }
        }
        next.set_row(j, &row)?;
    }
    Ok(next)
}

/// Observation indices used by the emission updates of one iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subsample {
    pub indices: Vec<usize>,
    /// Set when `round(rate * n)` was zero and the size was raised to one.
    pub floored: bool,
}

impl Subsample {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Every index `0..n`.
    pub fn full(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
            floored: false,
        }
    }
}

/// Subsample size `round(rate * n)`, floored at one. Returns the size and whether it was floored.
pub fn subsample_size(n: usize, rate: f64) -> (usize, bool) {
    let size = (rate * n as f64).round() as usize;
    if size == 0 && n > 0 {
        (1, true)
    } else {
        (size.min(n), false)
    }
}

/// Simple random sample without replacement of `round(rate * n)` indices.
pub fn subsample_indices<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Result<Subsample> {
    validate_rate(rate)?;
    let (size, floored) = subsample_size(n, rate);
    if size == n {
        return Ok(Subsample::full(n));
    }
    Ok(Subsample {
        indices: index::sample(rng, n, size).into_vec(),
        floored,
    })
}

/// Per-state count and sum of the subsampled observations.
pub fn subsample_stats(
    y: &[f64],
    states: &[usize],
    subsample: &Subsample,
    m: usize,
) -> (Vec<usize>, Vec<f64>) {
    let mut counts = vec![0usize; m];
    let mut sums = vec![0.0; m];
    for &i in &subsample.indices {
        counts[states[i]] += 1;
        sums[states[i]] += y[i];
    }
    (counts, sums)
}

/// Mean and variance of the Normal full conditional of one emission mean.
pub fn mean_full_conditional(count: usize, sum: f64, sigma2: f64, priors: &Priors) -> (f64, f64) {
    let precision = count as f64 / sigma2 + 1.0 / priors.mean_var;
    let mean = (sum / sigma2 + priors.mean_loc / priors.mean_var) / precision;
    (mean, 1.0 / precision)
}

/// Shape and scale of the inverse-gamma full conditional of one emission variance.
pub fn variance_full_conditional(count: usize, sum_sq: f64, priors: &Priors) -> (f64, f64) {
    (
        priors.var_shape + count as f64 / 2.0,
        priors.var_scale + sum_sq / 2.0,
    )
}

/// Draws from an inverse-gamma distribution with the given shape and scale.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / scale)
        .expect("positive shape and scale")
        .sample(rng);
    1.0 / g
}

/// Gibbs draw of the emission means from the subsampled observations of each state.
pub fn update_means<R: Rng + ?Sized>(
    y: &[f64],
    states: &[usize],
    subsample: &Subsample,
    sigma2: &[f64],
    priors: &Priors,
    rng: &mut R,
) -> Vec<f64> {
    let m = sigma2.len();
    let (counts, sums) = subsample_stats(y, states, subsample, m);
    (0..m)
        .map(|j| {
            let (mean, var) = mean_full_conditional(counts[j], sums[j], sigma2[j], priors);
            Normal::new(mean, var.sqrt())
                .expect("finite conditional")
                .sample(rng)
        })
        .collect()
}

/// Gibbs draw of the emission variances given the current means.
pub fn update_variances<R: Rng + ?Sized>(
    y: &[f64],
    states: &[usize],
    subsample: &Subsample,
    means: &[f64],
    priors: &Priors,
    rng: &mut R,
) -> Vec<f64> {
    let m = means.len();
    let mut counts = vec![0usize; m];
    let mut sum_sq = vec![0.0; m];
    for &i in &subsample.indices {
        let s = states[i];
        let d = y[i] - means[s];
        counts[s] += 1;
        sum_sq[s] += d * d;
    }
    (0..m)
        .map(|j| {
            let (shape, scale) = variance_full_conditional(counts[j], sum_sq[j], priors);
            sample_inverse_gamma(shape, scale, rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn counts_transitions_between_segments() {
        // states (1,2,1,2,3) in one-based labels
        let seq = SegmentSequence::from_pairs(&[(0, 1), (1, 2), (0, 1), (1, 3), (2, 1)]).unwrap();
        let c = transition_counts(&seq, 3);
        assert_eq!(c[0][1], 2);
        assert_eq!(c[1][0], 1);
        assert_eq!(c[1][2], 1);
        assert_eq!(c[2], vec![0, 0, 0]);
    }

    #[test]
    fn transition_rows_keep_zero_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let seq = SegmentSequence::from_pairs(&[(0, 1), (1, 2), (2, 1)]).unwrap();
        let tm = TransitionMatrix::uniform(3).unwrap();
        for _ in 0..200 {
            let next = update_transition_rows(&seq, &tm, 1.0, &mut rng).unwrap();
            for j in 0..3 {
                assert_eq!(next.prob(j, j), 0.0);
                assert!((next.row(j).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rho_draws_are_on_the_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let rho = update_rho(1, 4, 1.0, &mut rng).unwrap();
            assert!((rho.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(update_rho(4, 4, 1.0, &mut rng).is_err());
        // Overwhelming symmetric prior concentrates at uniform.
        let rho = update_rho(0, 2, 1e8, &mut rng).unwrap();
        assert!((rho[0] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn subsample_sizes() {
        assert_eq!(subsample_size(5232, 0.3), (1570, false));
        assert_eq!(subsample_size(10, 0.01), (1, true));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let full = subsample_indices(7, 1.0, &mut rng).unwrap();
        assert_eq!(full.indices, (0..7).collect::<Vec<_>>());
        let a = subsample_indices(100, 0.5, &mut rng).unwrap();
        let b = subsample_indices(100, 0.5, &mut rng).unwrap();
        assert_eq!(a.len(), 50);
        assert_ne!(a.indices, b.indices);
        let mut sorted = a.indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 50);
        assert!(subsample_indices(10, 1.5, &mut rng).is_err());
    }

    #[test]
    fn mean_conditional_with_two_points() {
        let (mean, var) = mean_full_conditional(2, 4.0, 1.0, &Priors::default());
        assert!((mean - 4.0 / 2.0001).abs() < 1e-12, "{mean}");
        assert!((var - 1.0 / 2.0001).abs() < 1e-15);
        // Flat prior limit: posterior mean is the sample mean.
        let flat = Priors {
            mean_var: 1e300,
            ..Priors::default()
        };
        assert!((mean_full_conditional(2, 4.0, 1.0, &flat).0 - 2.0).abs() < 1e-12);
        // No data: the prior.
        assert_eq!(mean_full_conditional(0, 0.0, 1.0, &Priors::default()), (0.0, 10_000.0));
    }

    #[test]
    fn variance_conditional_shapes() {
        let p = Priors::default();
        assert_eq!(variance_full_conditional(0, 0.0, &p), (3.0, 3.0));
        // subsample {0, 2} with mean 1: sum of squares 2
        assert_eq!(variance_full_conditional(2, 2.0, &p), (4.0, 4.0));
        assert_eq!(variance_full_conditional(6, 0.0, &p), (6.0, 3.0));
    }
}
