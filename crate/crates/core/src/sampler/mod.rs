//! Metropolis-within-Gibbs sampler for the covariate-duration HSMM.

pub mod beta;
pub mod block;
pub mod chain;
pub mod config;
pub mod gibbs;
pub mod init;
pub mod output;

pub use beta::{beta_log_ratio, update_beta, BetaUpdate};
pub use block::{sample_states_durations, BlockDraw, BlockOptions, BlockSampler};
pub use chain::{run_chain, run_chain_from, ChainRngs, ChainState, StepReport};
pub use config::{Priors, SamplerConfig};
pub use gibbs::{
    subsample_indices, update_means, update_rho, update_transition_rows, update_variances, Subsample,
};
pub use init::{initialize, initialize_with, InitialValues};
pub use output::{
    decode_segments, encode_segments, parameter_names, parameter_vector, params_from_vector, ChainOutput,
    RunCounters, SavedDraw,
};
