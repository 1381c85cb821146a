//! The subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use hsmm_core::diagnostics::segment_statistics;
use hsmm_core::rng::derive_rng;
use hsmm_core::simulator::{write_observations_csv, write_segments_csv, CovariateGen};
use hsmm_core::study::RateRecommendation;
use hsmm_core::{
    recommend_rate, run_chain, run_coverage_study, simulate, ChainOutput, Dataset, DurationModel,
    EmissionParams, ModelParams, SimSpec, TransitionMatrix,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{prepare_output_dir, RunConfig};
use crate::ingest::{ingest, Ingested};
use crate::manifest::Manifest;
use crate::report::{convergence, create, read_run, write_draws, write_state_draws, write_summaries, Convergence};

const CHAIN_SEEDS: &str = "chain c uses streams derived from (seed, [c, 0]) for states and coefficients and (seed, [c, 1]) for emission subsampling";

struct Timer {
    phases: Vec<(&'static str, Duration)>,
    last: Instant,
}

impl Timer {
    fn new() -> Self {
        Self {
            phases: Vec::new(),
            last: Instant::now(),
        }
    }

    fn lap(&mut self, name: &'static str) {
        let now = Instant::now();
        self.phases.push((name, now - self.last));
        self.last = now;
    }
}

fn input_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.data
        .input
        .as_deref()
        .ok_or_else(|| anyhow!("data.input: no input file configured (set it, or HSMM_INPUT)"))
}

fn load_data(cfg: &RunConfig) -> Result<Ingested> {
    let path = input_path(cfg)?;
    let ingested = ingest(path, &cfg.data)?;
    if ingested.data.len() < cfg.model.num_states {
        bail!(
            "{} observations after ingestion, fewer than model.num_states = {}",
            ingested.data.len(),
            cfg.model.num_states
        );
    }
    Ok(ingested)
}

fn write_ingest_report(ingested: &Ingested, dir: &Path) -> Result<()> {
    let body = json!({ "transform": ingested.transform, "report": ingested.report });
    std::fs::write(dir.join("ingest.json"), serde_json::to_string_pretty(&body)? + "\n")
        .context("cannot write ingest.json")
}

/// Runs `cfg.chains` chains with `m` states, in parallel, returned in chain order.
pub fn run_chains(data: &Dataset, m: usize, cfg: &RunConfig) -> Result<Vec<ChainOutput>> {
    (0..cfg.chains as u64)
        .into_par_iter()
        .map(|c| run_chain(data, m, &cfg.sampler, cfg.seed, c).with_context(|| format!("chain {}", c + 1)))
        .collect()
}

fn pilot_recommendation(outputs: &[ChainOutput], data: &Dataset, m: usize) -> Option<RateRecommendation> {
    let stats = segment_statistics(outputs).ok()?;
    let durations: Vec<f64> = stats.iter().map(|s| s.duration_mean).filter(|d| d.is_finite()).collect();
    let lo = durations.iter().copied().fold(f64::INFINITY, f64::min).round().max(2.0) as usize;
    let hi = durations.iter().copied().fold(f64::NEG_INFINITY, f64::max).round() as usize;
    recommend_rate(data.y(), lo, hi.max(lo), m).ok()
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    prepare_output_dir(&cfg.out)?;
    let mut timer = Timer::new();
    let ingested = load_data(cfg)?;
    write_ingest_report(&ingested, &cfg.out)?;
    timer.lap("ingest");

    let m = cfg.model.num_states;
    let outputs = run_chains(&ingested.data, m, cfg)?;
    timer.lap("sampling");

    let mut files = vec!["ingest.json".to_string(), "draws.csv".into(), "state_draws.csv".into()];
    let mut f = create(&cfg.out.join("draws.csv"))?;
    write_draws(&outputs, &mut f)?;
    f.flush()?;
    let mut f = create(&cfg.out.join("state_draws.csv"))?;
    write_state_draws(&outputs, &mut f)?;
    f.flush()?;
    files.extend(write_summaries(
        &outputs,
        &ingested.data,
        &cfg.data.covariate_columns,
        cfg.model.level,
        &cfg.out,
    )?);
    let conv = if outputs.len() >= 2 { Some(convergence(&outputs)?) } else { None };
    let recommendation = if cfg.sampler.subsample_rate == 1.0 {
        pilot_recommendation(&outputs, &ingested.data, m)
    } else {
        None
    };
    timer.lap("summaries");

    let mut manifest = Manifest::new("fit", cfg, CHAIN_SEEDS)?;
    manifest.outputs = files;
    manifest.details = json!({
        "observations": ingested.data.len(),
        "missing_hours": ingested.report.missing_hours,
        "gaps_closed_up": !ingested.report.gaps.is_empty(),
        "chains": outputs.iter().map(|o| json!({
            "saved_draws": o.draws.len(),
            "acceptance_rates": o.acceptance_rates,
            "adaptive_acceptance_rates": o.adaptive_acceptance_rates,
            "proposal_scales": o.proposal_scales,
            "counters": o.counters,
        })).collect::<Vec<_>>(),
        "mpsrf": conv.as_ref().map(|c| c.mpsrf),
        "mpsrf_pseudo_inverse": conv.as_ref().map(|c| c.pseudo_inverse),
        "max_psrf_upper": conv.as_ref().map(Convergence::max_upper),
        "rate_recommendation": recommendation,
    });
    manifest.write(&cfg.out, &timer.phases)
}

pub fn summarize(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    prepare_output_dir(&cfg.out)?;
    let mut timer = Timer::new();
    let ingested = load_data(cfg)?;
    let run_dir: PathBuf = cfg.summarize.run_dir.clone().unwrap_or_else(|| cfg.out.clone());
    let outputs = read_run(&run_dir, &ingested.data, &cfg.sampler)?;
    timer.lap("read");
    let files = write_summaries(
        &outputs,
        &ingested.data,
        &cfg.data.covariate_columns,
        cfg.model.level,
        &cfg.out,
    )?;
    let conv = if outputs.len() >= 2 { Some(convergence(&outputs)?) } else { None };
    timer.lap("summaries");
    let mut manifest = Manifest::new("summarize", cfg, "no random streams")?;
    manifest.outputs = files;
    manifest.details = json!({
        "run_dir": run_dir,
        "chains": outputs.len(),
        "saved_draws": outputs.iter().map(|o| o.draws.len()).sum::<usize>(),
        "mpsrf": conv.as_ref().map(|c| c.mpsrf),
        "max_psrf_upper": conv.as_ref().map(Convergence::max_upper),
    });
    manifest.write(&cfg.out, &timer.phases)
}

/// Outcome of a state-count comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Selection {
    Recommended { num_states: usize },
    NoRecommendation,
    /// Only one candidate was fitted; `converged` reports its own check.
    NoComparison { num_states: usize, converged: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateReport {
    pub num_states: usize,
    pub mpsrf: Option<f64>,
    pub max_psrf_upper: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

/// The smallest candidate whose diagnostics fall below `threshold`.
pub fn choose_states(reports: &[CandidateReport]) -> Selection {
    if let [only] = reports {
        return Selection::NoComparison {
            num_states: only.num_states,
            converged: only.converged,
        };
    }
    reports
        .iter()
        .filter(|r| r.converged)
        .map(|r| r.num_states)
        .min()
        .map_or(Selection::NoRecommendation, |num_states| Selection::Recommended { num_states })
}

pub fn select_states(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.chains < 2 {
        bail!("chains: select-states needs at least 2 chains per candidate, got {}", cfg.chains);
    }
    let mut candidates = cfg.model.candidates.clone();
    candidates.sort_unstable();
    candidates.dedup();
    if candidates.is_empty() || candidates[0] < 2 {
        bail!("model.candidates: need at least one state count, each at least 2");
    }
    prepare_output_dir(&cfg.out)?;
    let mut timer = Timer::new();
    let ingested = load_data(cfg)?;
    timer.lap("ingest");

    let threshold = cfg.model.psrf_threshold;
    let reports: Vec<CandidateReport> = candidates
        .iter()
        .map(|&m| {
            let diag = run_chains(&ingested.data, m, cfg).and_then(|o| convergence(&o));
            match diag {
                Ok(c) => CandidateReport {
                    num_states: m,
                    mpsrf: Some(c.mpsrf),
                    max_psrf_upper: Some(c.max_upper()),
                    converged: c.converged(threshold),
                    error: None,
                },
                Err(e) => CandidateReport {
                    num_states: m,
                    mpsrf: None,
                    max_psrf_upper: None,
                    converged: false,
                    error: Some(format!("{e:#}")),
                },
            }
        })
        .collect();
    timer.lap("sampling");
    let selection = choose_states(&reports);

    let mut f = create(&cfg.out.join("model_selection.csv"))?;
    writeln!(f, "num_states,mpsrf,max_psrf_upper,converged")?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in &reports {
        writeln!(f, "{},{},{},{}", r.num_states, opt(r.mpsrf), opt(r.max_psrf_upper), r.converged)?;
    }
    f.flush()?;

    let mut manifest = Manifest::new("select-states", cfg, CHAIN_SEEDS)?;
    manifest.outputs = vec!["model_selection.csv".into()];
    manifest.failures = reports.iter().filter(|r| r.error.is_some()).count();
    manifest.details = json!({
        "threshold": threshold,
        "selection": selection,
        "candidates": reports,
    });
    manifest.write(&cfg.out, &timer.phases)
}

/// The true model of `simulate`.
pub fn simulation_spec(cfg: &RunConfig) -> Result<SimSpec> {
    let s = &cfg.simulate;
    let m = s.means.len();
    let transitions = match (&s.transitions, &s.initial) {
        (None, None) => TransitionMatrix::uniform(m)?,
        (rows, initial) => TransitionMatrix::new(
            rows.clone().unwrap_or_else(|| TransitionMatrix::uniform(m).expect("m >= 2").rows()),
            initial.clone().unwrap_or_else(|| vec![1.0 / m as f64; m]),
        )?,
    };
    let durations = DurationModel::new(s.coefficients.clone(), cfg.sampler.covariate_summary, cfg.sampler.link)?;
    let r = durations.num_covariates();
    let spec = SimSpec {
        params: ModelParams::new(EmissionParams::new(s.means.clone(), s.variances.clone())?, transitions, durations)?,
        psi: s.psi,
        target_n: s.n,
        truncate_final: true,
        covariates: (r > 0).then_some(CovariateGen {
            autocorrelation: s.covariate_autocorrelation,
        }),
    };
    spec.validate().context("simulate")?;
    Ok(spec)
}

pub fn simulate_cmd(cfg: &RunConfig) -> Result<()> {
    let spec = simulation_spec(cfg)?;
    prepare_output_dir(&cfg.out)?;
    let mut timer = Timer::new();
    let sim = simulate(&spec, &mut derive_rng(cfg.seed, &[0]))?;
    timer.lap("simulate");
    let mut f = create(&cfg.out.join("observations.csv"))?;
    write_observations_csv(&sim, &mut f)?;
    f.flush()?;
    let mut f = create(&cfg.out.join("truth_segments.csv"))?;
    write_segments_csv(&sim.truth, &mut f)?;
    f.flush()?;
    let mut manifest = Manifest::new("simulate", cfg, "one stream derived from (seed, [0])")?;
    manifest.outputs = vec!["observations.csv".into(), "truth_segments.csv".into()];
    manifest.details = json!({
        "observations": sim.data.len(),
        "segments": sim.truth.len(),
        "x0": sim.data.x0(),
    });
    manifest.write(&cfg.out, &timer.phases)
}

pub fn coverage(cfg: &RunConfig) -> Result<()> {
    let spec = &cfg.coverage;
    spec.validate().context("coverage")?;
    prepare_output_dir(&cfg.out)?;
    let mut timer = Timer::new();
    let table = run_coverage_study(spec)?;
    timer.lap("study");
    let mut f = create(&cfg.out.join("coverage_table.csv"))?;
    table.write_csv(&mut f)?;
    f.flush()?;
    let mut manifest = Manifest::new(
        "coverage",
        cfg,
        "replicate r of column c simulates from (seed, [0, c, r]); its fit at rate k uses (seed, [1, c, r, k])",
    )?;
    manifest.outputs = vec!["coverage_table.csv".into()];
    manifest.failures = table.total_failures();
    manifest.details = json!({
        "columns": table.columns,
        "replicates_used": table.replicates,
        "failures": table.failures,
    });
    manifest.write(&cfg.out, &timer.phases)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(m: usize, converged: bool) -> CandidateReport {
        CandidateReport {
            num_states: m,
            mpsrf: Some(1.0),
            max_psrf_upper: Some(1.0),
            converged,
            error: None,
        }
    }

    #[test]
    fn smallest_converged_candidate_wins() {
        let r = [report(2, false), report(3, true), report(4, true)];
        assert_eq!(choose_states(&r), Selection::Recommended { num_states: 3 });
        assert_eq!(choose_states(&[report(2, false), report(3, false)]), Selection::NoRecommendation);
        assert_eq!(
            choose_states(&[report(3, true)]),
            Selection::NoComparison {
                num_states: 3,
                converged: true
            }
        );
    }
}
