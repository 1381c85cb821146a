//! The Metropolis-within-Gibbs loop.
//!
//! Per iteration: `ρ`, transition rows, `β` per state, the block draw of states
//! and durations, a fresh subsample, `μ`, `σ²`, save. The emission steps draw
//! from their own random stream so the subsample rate never shifts the
//! randomness seen by the other steps.

use crate::duration::FeatureTable;
use crate::error::{HsmmError, Result};
use crate::likelihood::segment_rates;
use crate::model::{invert_permutation, Dataset, ModelParams, SegmentSequence};
use crate::rng::{derive_rng, StreamRng};
use crate::sampler::beta::update_beta;
use crate::sampler::block::{BlockOptions, BlockSampler};
use crate::sampler::config::SamplerConfig;
use crate::sampler::gibbs::{
    subsample_indices, update_means, update_rho, update_transition_rows, update_variances,
};
use crate::sampler::init::initialize;
use crate::sampler::output::{ChainOutput, RunCounters, SavedDraw};

/// The two random streams of one chain.
#[derive(Debug, Clone)]
pub struct ChainRngs {
    /// State process, coefficients and block draws.
    pub main: StreamRng,
    /// Subsampling and emission updates.
    pub emission: StreamRng,
}

impl ChainRngs {
    /// Streams of chain `chain` under run seed `seed`.
    pub fn derive(seed: u64, chain: u64) -> Self {
        Self {
            main: derive_rng(seed, &[chain, 0]),
            emission: derive_rng(seed, &[chain, 1]),
        }
    }
}

/// What one iteration did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Coefficient proposal accepted, per state.
    pub accepted: Vec<bool>,
    pub subsample_size: usize,
    /// Subsampled observations per state.
    pub state_counts: Vec<usize>,
    pub counters: RunCounters,
}

/// Current values of a chain plus reusable workspace.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub params: ModelParams,
    pub seq: SegmentSequence,
    /// Random-walk scale per state.
    pub kappa: Vec<f64>,
    features: FeatureTable,
    block: BlockSampler,
    states: Vec<usize>,
}

impl ChainState {
    pub fn new(
        params: ModelParams,
        seq: SegmentSequence,
        data: &Dataset,
        kappa: Vec<f64>,
    ) -> Result<Self> {
        let m = params.num_states();
        params.check_data(data)?;
        seq.check_against(data.len(), m)?;
        if kappa.len() != m {
            return Err(HsmmError::Precondition(format!(
                "{} proposal scales for {m} states",
                kappa.len()
            )));
        }
        let features = FeatureTable::new(data, params.durations.summary)?;
        Ok(Self {
            states: seq.to_states(),
            block: BlockSampler::new(data.len(), m),
            params,
            seq,
            kappa,
            features,
        })
    }

    pub fn features(&self) -> &FeatureTable {
        &self.features
    }

    /// Runs one full sweep.
    pub fn step(
        &mut self,
        data: &Dataset,
        config: &SamplerConfig,
        rngs: &mut ChainRngs,
    ) -> Result<StepReport> {
        let m = self.params.num_states();
        let priors = &config.priors;
        let mut counters = RunCounters::default();

        let first = self.seq.segments()[0].state;
        let rho = update_rho(first, m, priors.initial_concentration, &mut rngs.main)?;
        let mut transitions = update_transition_rows(
            &self.seq,
            &self.params.transitions,
            priors.transition_concentration,
            &mut rngs.main,
        )?;
        transitions.set_initial(&rho)?;
        self.params.transitions = transitions;

        let link = self.params.durations.link;
        let mut accepted = Vec::with_capacity(m);
        for j in 0..m {
            let update = update_beta(
                j,
                &self.seq,
                &self.features,
                self.params.durations.row(j),
                self.kappa[j],
                link,
                priors,
                &mut rngs.main,
            )?;
            counters.nonfinite_ratios += usize::from(update.nonfinite);
            if update.accepted {
                self.params.durations.set_row(j, &update.beta)?;
            }
            accepted.push(update.accepted);
        }

        let opts = BlockOptions {
            support_tail: config.support_tail,
            duration_cap: config.duration_cap,
        };
        let draw = self
            .block
            .sample(&self.params, data, &self.features, opts, &mut rngs.main)?;
        counters.truncation_warnings += draw.truncation_warnings;
        counters.clamped_rates += draw.clamped_rates;
        self.seq = draw.seq;
        self.states = self.seq.to_states();

        let sub = subsample_indices(data.len(), config.subsample_rate, &mut rngs.emission)?;
        counters.floored_subsamples += usize::from(sub.floored);
        let mut state_counts = vec![0; m];
        for &i in &sub.indices {
            state_counts[self.states[i]] += 1;
        }
        let means = update_means(
            data.y(),
            &self.states,
            &sub,
            self.params.emission.variances(),
            priors,
            &mut rngs.emission,
        );
        let variances = update_variances(data.y(), &self.states, &sub, &means, priors, &mut rngs.emission);
        self.params.emission = crate::model::EmissionParams::new(means, variances)?;

        Ok(StepReport {
            accepted,
            subsample_size: sub.len(),
            state_counts,
            counters,
        })
    }
}

/// Permutation sorting states by ascending emission mean; old `perm[i]` becomes new `i`.
pub fn mean_order(params: &ModelParams) -> Vec<usize> {
    let means = params.emission.means();
    let mut perm: Vec<usize> = (0..means.len()).collect();
    perm.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b)));
    perm
}

/// A saved draw relabelled so emission means ascend.
pub fn aligned_draw(
    iteration: usize,
    params: &ModelParams,
    seq: &SegmentSequence,
    features: &FeatureTable,
    report: &StepReport,
) -> Result<SavedDraw> {
    let perm = mean_order(params);
    let map = invert_permutation(&perm);
    let params = params.permute(&perm)?;
    let seq = seq.relabel(&map);
    let (phi, _) = segment_rates(&params, features, &seq);
    Ok(SavedDraw {
        iteration,
        phi,
        subsample_size: report.subsample_size,
        state_counts: perm.iter().map(|&o| report.state_counts[o]).collect(),
        params,
        seq,
    })
}

/// Step size of the `k`-th (one-based) scale adjustment on the log scale.
fn adaptation_gain(k: usize) -> f64 {
    2.0 / (k as f64).sqrt()
}

/// Runs a chain from explicit starting values.
pub fn run_chain_from(
    data: &Dataset,
    params: ModelParams,
    seq: SegmentSequence,
    config: &SamplerConfig,
    rngs: &mut ChainRngs,
) -> Result<ChainOutput> {
    config.validate()?;
    let m = params.num_states();
    let mut state = ChainState::new(params, seq, data, vec![config.initial_proposal_scale; m])?;
    let mut counters = RunCounters::default();
    let mut batch = vec![0usize; m];
    let mut adaptive_accepts = vec![0usize; m];
    let mut accepts = vec![0usize; m];
    let mut draws = Vec::with_capacity(config.saved_draws());
    let mut batches = 0;

    for it in 0..config.iterations {
        let report = state
            .step(data, config, rngs)
            .map_err(|e| e.at_iteration(it))?;
        counters.absorb(&report.counters);
        if it < config.adaptive_iterations {
            for j in 0..m {
                let a = usize::from(report.accepted[j]);
                batch[j] += a;
                adaptive_accepts[j] += a;
            }
            if (it + 1) % config.adapt_interval == 0 {
                batches += 1;
                let gain = adaptation_gain(batches);
                for j in 0..m {
                    let rate = batch[j] as f64 / config.adapt_interval as f64;
                    let log_kappa = state.kappa[j].ln() + gain * (rate - config.target_acceptance);
                    state.kappa[j] = log_kappa.clamp(-20.0, 5.0).exp();
                    batch[j] = 0;
                }
            }
            continue;
        }
        for j in 0..m {
            accepts[j] += usize::from(report.accepted[j]);
        }
        if (it - config.adaptive_iterations) % config.thin == 0 {
            let draw = aligned_draw(it, &state.params, &state.seq, state.features(), &report)
                .map_err(|e| e.at_iteration(it))?;
            draws.push(draw);
        }
    }

    let sampled = (config.iterations - config.adaptive_iterations) as f64;
    let adaptive = config.adaptive_iterations.max(1) as f64;
    Ok(ChainOutput {
        num_states: m,
        num_covariates: data.num_covariates(),
        draws,
        acceptance_rates: accepts.iter().map(|&a| a as f64 / sampled).collect(),
        adaptive_acceptance_rates: adaptive_accepts
            .iter()
            .map(|&a| a as f64 / adaptive)
            .collect(),
        proposal_scales: state.kappa.clone(),
        counters,
    })
}

/// Initializes and runs one chain on the streams of `(seed, chain)`.
pub fn run_chain(
    data: &Dataset,
    m: usize,
    config: &SamplerConfig,
    seed: u64,
    chain: u64,
) -> Result<ChainOutput> {
    config.validate()?;
    let mut rngs = ChainRngs::derive(seed, chain);
    let (params, seq) = initialize(data, m, config, &mut rngs.main)?;
    run_chain_from(data, params, seq, config, &mut rngs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EmissionParams, TransitionMatrix, DurationModel};

    fn small_data() -> Dataset {
        let mut y = Vec::new();
        for block in 0..8 {
            let mu = if block % 2 == 0 { -2.0 } else { 2.0 };
            for t in 0..6 {
                y.push(mu + 0.1 * ((block * 6 + t) as f64).sin());
            }
        }
        Dataset::new(
            y.clone(),
            y.iter().enumerate().map(|(t, _)| vec![(t as f64 * 0.3).cos()]).collect(),
            None,
        )
        .unwrap()
    }

    fn short_config() -> SamplerConfig {
        SamplerConfig {
            iterations: 300,
            adaptive_iterations: 100,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn saved_count_and_determinism() {
        let data = small_data();
        let c = short_config();
        let a = run_chain(&data, 2, &c, 11, 0).unwrap();
        let b = run_chain(&data, 2, &c, 11, 0).unwrap();
        assert_eq!(a.draws.len(), 200);
        assert_eq!(a, b);
        let other = run_chain(&data, 2, &c, 11, 1).unwrap();
        assert_ne!(a.draws, other.draws);
        assert!(a.acceptance_rates.iter().all(|r| (0.0..=1.0).contains(r)));
    }

    #[test]
    fn saved_draws_are_sorted_by_mean() {
        let out = run_chain(&small_data(), 2, &short_config(), 3, 0).unwrap();
        for d in &out.draws {
            let mu = d.params.emission.means();
            assert!(mu[0] <= mu[1]);
            assert_eq!(d.phi.len(), d.seq.len());
            assert_eq!(d.seq.total_duration(), 48);
        }
        let last = out.draws.last().unwrap().params.emission.means().to_vec();
        assert!((last[0] + 2.0).abs() < 0.5 && (last[1] - 2.0).abs() < 0.5, "{last:?}");
    }

    #[test]
    fn subsample_rate_does_not_touch_beta_decisions() {
        let data = small_data();
        let params = ModelParams::new(
            EmissionParams::new(vec![-2.0, 2.0], vec![1.0, 1.0]).unwrap(),
            TransitionMatrix::uniform(2).unwrap(),
            DurationModel::new(vec![vec![1.5, 0.2], vec![1.7, -0.1]], Default::default(), Default::default())
                .unwrap(),
        )
        .unwrap();
        let seq = SegmentSequence::from_states(
            &data.y().iter().map(|&v| usize::from(v > 0.0)).collect::<Vec<_>>(),
        )
        .unwrap();
        let mut decisions = Vec::new();
        for rate in [1.0, 0.3] {
            let config = SamplerConfig {
                subsample_rate: rate,
                ..SamplerConfig::default()
            };
            let mut state = ChainState::new(params.clone(), seq.clone(), &data, vec![0.5, 0.5]).unwrap();
            let mut rngs = ChainRngs::derive(5, 0);
            let report = state.step(&data, &config, &mut rngs).unwrap();
            decisions.push((report.accepted, state.params.durations.clone()));
        }
        assert_eq!(decisions[0], decisions[1]);
    }

    #[test]
    fn errors_carry_the_iteration() {
        let data = small_data();
        let (params, seq) = initialize(&data, 2, &short_config(), &mut derive_rng(0, &[0])).unwrap();
        let config = SamplerConfig {
            iterations: 10,
            adaptive_iterations: 0,
            support_tail: 1e-10,
            ..SamplerConfig::default()
        };
        // A degenerate emission pushes the block sampler into underflow on the first sweep.
        let mut broken = params;
        broken.emission = EmissionParams::new(vec![1e200, -1e200], vec![1e-300, 1e-300]).unwrap();
        let err = run_chain_from(&data, broken, seq, &config, &mut ChainRngs::derive(0, 0)).unwrap_err();
        assert!(matches!(err, HsmmError::AtIteration { iteration: 0, .. }), "{err}");
    }
}
