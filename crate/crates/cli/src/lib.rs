//! Command-line front end: configuration, ingestion, subcommands and reports.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod manifest;
pub mod report;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "hsmm", version, about = "Hidden semi-Markov models with covariate-dependent durations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of parallel chains.
    #[arg(long, global = true)]
    pub chains: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Emission subsampling rate; for `coverage`, the only rate studied.
    #[arg(long, global = true)]
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic series from `[simulate]`.
    Simulate,
    /// Fit the model to `[data]` and write draws and summaries.
    Fit,
    /// Run the subsampling coverage study in `[coverage]`.
    Coverage,
    /// Compare state counts in `model.candidates` by shrink factors.
    SelectStates,
    /// Recompute summaries from the draws of an earlier fit.
    Summarize,
}

impl Cli {
    /// The effective configuration: file, then environment, then flags.
    pub fn config(&self, env: impl Fn(&str) -> Option<String>) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        cfg.apply_env(env)?;
        cfg.apply_overrides(&Overrides {
            seed: self.seed,
            chains: self.chains,
            out: self.out.clone(),
            rate: self.rate,
        });
        Ok(cfg)
    }
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Simulate => commands::simulate_cmd(cfg),
        Command::Fit => commands::fit(cfg),
        Command::Coverage => commands::coverage(cfg),
        Command::SelectStates => commands::select_states(cfg),
        Command::Summarize => commands::summarize(cfg),
    }
}
