//! Convergence diagnostics and posterior summaries.

pub mod convergence;
pub mod summary;

pub use convergence::{mpsrf, psrf, psrf_at, within_between, ChainSet, Mpsrf, Psrf};
pub use summary::{
    credible_interval, empirical_coverage, quantile_sorted, segment_statistics, state_mode_sequence,
    summarize_parameters, ParameterSummary, SegmentStats, StateModes,
};
