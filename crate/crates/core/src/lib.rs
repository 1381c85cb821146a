//! Bayesian hidden semi-Markov model whose state durations follow a
//! zero-truncated Poisson law with covariate-dependent rates.
//!
//! The crate covers the model itself, an MCMC sampler with optional
//! subsampling of the emission updates, a data simulator, convergence and
//! posterior summaries, and the Monte Carlo coverage study used to choose a
//! subsampling rate.

/// Version of this crate.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod diagnostics;
pub mod duration;
pub mod error;
pub mod likelihood;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod simulator;
pub mod study;
pub mod ztp;

pub use duration::{duration_rate, CovariateSummary, FeatureTable, Link, Rate};
pub use error::{HsmmError, Result};
pub use likelihood::{emission_loglik, joint_loglik, joint_loglik_terms, LogLikTerms};
pub use model::{
    Dataset, DurationModel, EmissionParams, ModelParams, Segment, SegmentSequence,
    TransitionMatrix,
};
pub use diagnostics::{credible_interval, mpsrf, psrf, ChainSet};
pub use sampler::{run_chain, ChainOutput, SamplerConfig};
pub use simulator::{simulate, SimSpec, Simulation};
pub use study::{recommend_rate, run_coverage_study, CoverageTable, ScenarioSpec};
pub use ztp::{ztp_ln_pmf, ztp_mean, ztp_pmf, ztp_sample, ZeroTruncatedPoisson};
