//! Starting values for a chain.

use rand::Rng;

use crate::duration::FeatureTable;
use crate::error::{HsmmError, Result};
use crate::model::{
    Dataset, DurationModel, EmissionParams, ModelParams, Segment, SegmentSequence, TransitionMatrix,
};
use crate::sampler::config::SamplerConfig;
use crate::ztp::ztp_sample;

/// Floor applied to every starting variance.
pub const INITIAL_VARIANCE_FLOOR: f64 = 1e-6;

/// Optional overrides for the starting state process.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InitialValues {
    pub initial: Option<Vec<f64>>,
    pub transitions: Option<Vec<Vec<f64>>>,
    pub coefficients: Option<Vec<Vec<f64>>>,
}

/// Starting duration rate: about two visits per state, at most 10.
pub fn initial_rate(n: usize, m: usize) -> f64 {
    (n as f64 / (2.0 * m as f64)).min(10.0)
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = rng.random();
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = i;
            if u < p {
                return i;
            }
            u -= p;
        }
    }
    last
}

fn sample_variance(values: &[f64]) -> f64 {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
}

/// Simulates a starting segmentation from the state process: `S_1 ~ ρ`,
/// durations from the rate at each start, next state from `P`. The final
/// duration is clipped so the total is exactly `n`.
pub fn forward_segments<R: Rng + ?Sized>(
    transitions: &TransitionMatrix,
    durations: &DurationModel,
    features: &FeatureTable,
    rng: &mut R,
) -> Result<SegmentSequence> {
    let n = features.len();
    let mut segments = Vec::new();
    let mut state = sample_index(transitions.initial(), rng);
    let mut t = 0;
    loop {
        let phi = features.rate(durations.row(state), t, durations.link).value;
        let tau = ztp_sample(phi, rng)? as usize;
        let d = tau.min(n - t);
        segments.push(Segment { state, duration: d });
        t += d;
        if t == n {
            break;
        }
        state = sample_index(transitions.row(state), rng);
    }
    SegmentSequence::new(segments)
}

/// Per-state means and variances of `y` grouped by `seq`.
///
/// States with fewer than two observations fall back to the global variance
/// (and, when empty, the global mean).
pub fn grouped_moments(y: &[f64], seq: &SegmentSequence, m: usize) -> Result<EmissionParams> {
    let mut groups = vec![Vec::new(); m];
    for (&v, s) in y.iter().zip(seq.to_states()) {
        groups[s].push(v);
    }
    let global_mean = y.iter().sum::<f64>() / y.len() as f64;
    let global_var = if y.len() > 1 {
        sample_variance(y)
    } else {
        1.0
    };
    let mut means = Vec::with_capacity(m);
    let mut vars = Vec::with_capacity(m);
    for g in &groups {
        let mean = if g.is_empty() {
            global_mean
        } else {
            g.iter().sum::<f64>() / g.len() as f64
        };
        let var = if g.len() > 1 { sample_variance(g) } else { global_var };
        means.push(mean);
        vars.push(var.max(INITIAL_VARIANCE_FLOOR));
    }
    EmissionParams::new(means, vars)
}

/// Default starting values: uniform `ρ` and `P`, intercepts `ln(min(10, n/2M))`, zero slopes.
pub fn initialize<R: Rng + ?Sized>(
    data: &Dataset,
    m: usize,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<(ModelParams, SegmentSequence)> {
    initialize_with(data, m, config, &InitialValues::default(), rng)
}

/// Like [`initialize`], with some starting values supplied.
pub fn initialize_with<R: Rng + ?Sized>(
    data: &Dataset,
    m: usize,
    config: &SamplerConfig,
    values: &InitialValues,
    rng: &mut R,
) -> Result<(ModelParams, SegmentSequence)> {
    if m < 2 {
        return Err(HsmmError::config("num_states", format!("must be at least 2, got {m}")));
    }
    let n = data.len();
    if n < m {
        return Err(HsmmError::Precondition(format!(
            "{n} observations cannot support {m} states"
        )));
    }
    let uniform = TransitionMatrix::uniform(m)?;
    let transitions = TransitionMatrix::new(
        values.transitions.clone().unwrap_or_else(|| uniform.rows()),
        values
            .initial
            .clone()
            .unwrap_or_else(|| uniform.initial().to_vec()),
    )?;
    let r = data.num_covariates();
    let coefficients = values.coefficients.clone().unwrap_or_else(|| {
        let mut row = vec![0.0; r + 1];
        row[0] = initial_rate(n, m).ln();
        vec![row; m]
    });
    let durations = DurationModel::new(coefficients, config.covariate_summary, config.link)?;
    let features = FeatureTable::new(data, config.covariate_summary)?;
    let seq = forward_segments(&transitions, &durations, &features, rng)?;
    let emission = grouped_moments(data.y(), &seq, m)?;
    let params = ModelParams::new(emission, transitions, durations)?;
    params.check_data(data)?;
    Ok((params, seq))
}
