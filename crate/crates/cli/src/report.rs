//! Summary tables, convergence diagnostics and the draw files of a fit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use hsmm_core::diagnostics::{
    mpsrf, psrf, segment_statistics, state_mode_sequence, summarize_parameters, ChainSet,
    ParameterSummary,
};
use hsmm_core::sampler::{decode_segments, encode_segments, params_from_vector, RunCounters, SavedDraw};
use hsmm_core::{ChainOutput, Dataset, FeatureTable, SamplerConfig};
use hsmm_core::likelihood::segment_rates;
use serde::Serialize;

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
}

/// `draws.csv`: `chain,iteration`, every parameter, `subsample_size`, `n_sub_j`.
pub fn write_draws(outputs: &[ChainOutput], mut out: impl Write) -> Result<()> {
    let first = &outputs[0];
    let mut header = vec!["chain".to_string(), "iteration".to_string()];
    header.extend(first.parameter_names());
    header.push("subsample_size".into());
    header.extend((1..=first.num_states).map(|j| format!("n_sub_{j}")));
    writeln!(out, "{}", header.join(","))?;
    for (c, o) in outputs.iter().enumerate() {
        for (d, row) in o.draws.iter().zip(o.parameter_matrix()) {
            let mut line = vec![(c + 1).to_string(), d.iteration.to_string()];
            line.extend(row.iter().map(f64::to_string));
            line.push(d.subsample_size.to_string());
            line.extend(d.state_counts.iter().map(usize::to_string));
            writeln!(out, "{}", line.join(","))?;
        }
    }
    Ok(())
}

/// `state_draws.csv`: `chain,iteration,segments` with run-length encoded segments.
pub fn write_state_draws(outputs: &[ChainOutput], mut out: impl Write) -> Result<()> {
    writeln!(out, "chain,iteration,segments")?;
    for (c, o) in outputs.iter().enumerate() {
        for d in &o.draws {
            writeln!(out, "{},{},{}", c + 1, d.iteration, encode_segments(&d.seq))?;
        }
    }
    Ok(())
}

fn lines(path: &Path) -> Result<Vec<String>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    BufReader::new(f)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .with_context(|| format!("cannot read {}", path.display()))
}

/// Rebuilds chain outputs from `draws.csv` and `state_draws.csv` in `dir`.
pub fn read_run(dir: &Path, data: &Dataset, sampler: &SamplerConfig) -> Result<Vec<ChainOutput>> {
    let draws = lines(&dir.join("draws.csv"))?;
    let states = lines(&dir.join("state_draws.csv"))?;
    let header: Vec<&str> = draws.first().ok_or_else(|| anyhow!("draws.csv is empty"))?.split(',').collect();
    let m = header.iter().filter(|h| h.starts_with("mu_")).count();
    let r = data.num_covariates();
    let p = hsmm_core::sampler::parameter_names(m, r).len();
    if header.len() != 2 + p + 1 + m {
        bail!("draws.csv has {} columns; expected {} for {m} states and {r} covariates", header.len(), 3 + p + m);
    }
    if states.len() != draws.len() {
        bail!("draws.csv and state_draws.csv differ in length");
    }
    let features = FeatureTable::new(data, sampler.covariate_summary)?;
    let mut outputs: Vec<ChainOutput> = Vec::new();
    for (i, (line, sline)) in draws.iter().zip(&states).enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || anyhow!("draws.csv line {}: malformed", i + 1);
        if fields.len() != header.len() {
            return Err(bad());
        }
        let chain: usize = fields[0].parse().map_err(|_| bad())?;
        let iteration: usize = fields[1].parse().map_err(|_| bad())?;
        let values = fields[2..2 + p]
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad())?;
        let subsample_size = fields[2 + p].parse().map_err(|_| bad())?;
        let state_counts = fields[3 + p..]
            .iter()
            .map(|v| v.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad())?;
        let mut s = sline.splitn(3, ',');
        let (sc, si, segs) = (s.next(), s.next(), s.next());
        if sc != Some(fields[0]) || si != Some(fields[1]) {
            bail!("state_draws.csv line {} does not match draws.csv", i + 1);
        }
        let seq = decode_segments(segs.unwrap_or(""))?;
        seq.check_against(data.len(), m)
            .with_context(|| format!("state_draws.csv line {} does not fit the data", i + 1))?;
        let params = params_from_vector(m, r, &values, sampler.covariate_summary, sampler.link)?;
        let (phi, _) = segment_rates(&params, &features, &seq);
        if chain == 0 || chain > outputs.len() + 1 {
            bail!("draws.csv line {}: chains must be numbered 1, 2, ... in order", i + 1);
        }
        if chain > outputs.len() {
            outputs.push(ChainOutput {
                num_states: m,
                num_covariates: r,
                draws: Vec::new(),
                acceptance_rates: Vec::new(),
                adaptive_acceptance_rates: Vec::new(),
                proposal_scales: Vec::new(),
                counters: RunCounters::default(),
            });
        }
        outputs[chain - 1].draws.push(SavedDraw {
            iteration,
            params,
            seq,
            phi,
            subsample_size,
            state_counts,
        });
    }
    if outputs.is_empty() {
        bail!("draws.csv holds no draws");
    }
    Ok(outputs)
}

/// Parameters entering the convergence diagnostics: the last initial probability
/// and the last entry of every transition row are implied by the others.
pub fn diagnostic_columns(m: usize, r: usize) -> Vec<usize> {
    let names = hsmm_core::sampler::parameter_names(m, r);
    names
        .iter()
        .enumerate()
        .filter(|(_, n)| {
            if *n == &format!("rho_{m}") {
                return false;
            }
            if let Some(rest) = n.strip_prefix("p_") {
                let (j, k) = rest.split_once('_').expect("p_j_k");
                let j: usize = j.parse().expect("state label");
                let last = if j == m { m - 1 } else { m };
                return k.parse::<usize>().expect("state label") != last;
            }
            true
        })
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterPsrf {
    pub parameter: String,
    pub point: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Convergence {
    pub mpsrf: f64,
    pub pseudo_inverse: bool,
    pub psrf: Vec<ParameterPsrf>,
    /// Parameters without within-chain variation, left out of the diagnostics.
    pub constant: Vec<String>,
}

impl Convergence {
    pub fn max_upper(&self) -> f64 {
        self.psrf.iter().map(|p| p.upper).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn converged(&self, threshold: f64) -> bool {
        self.mpsrf < threshold && self.max_upper() < threshold
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "parameter,psrf,psrf_upper")?;
        for p in &self.psrf {
            writeln!(out, "{},{},{}", p.parameter, p.point, p.upper)?;
        }
        Ok(())
    }
}

/// Shrink factors across chains; needs at least two.
pub fn convergence(outputs: &[ChainOutput]) -> Result<Convergence> {
    let first = &outputs[0];
    let names = first.parameter_names();
    let cols = diagnostic_columns(first.num_states, first.num_covariates);
    let full = ChainSet::new(outputs.iter().map(ChainOutput::parameter_matrix).collect())?;
    let mut kept = Vec::new();
    let mut constant = Vec::new();
    let mut per = Vec::new();
    let selected = full.select(&cols)?;
    for (i, &c) in cols.iter().enumerate() {
        match psrf(&selected, i) {
            Ok(r) => {
                kept.push(c);
                per.push(ParameterPsrf {
                    parameter: names[c].clone(),
                    point: r.point,
                    upper: r.upper,
                });
            }
            Err(hsmm_core::HsmmError::DegenerateChain(_)) => constant.push(names[c].clone()),
            Err(e) => return Err(e.into()),
        }
    }
    if kept.is_empty() {
        bail!("every diagnosed parameter is constant within chains");
    }
    let multi = mpsrf(&full.select(&kept)?)?;
    Ok(Convergence {
        mpsrf: multi.value,
        pseudo_inverse: multi.pseudo_inverse,
        psrf: per,
        constant,
    })
}

fn find<'a>(summary: &'a [ParameterSummary], name: &str) -> &'a ParameterSummary {
    summary
        .iter()
        .find(|s| s.name == name)
        .expect("parameter present in the layout")
}

/// Writes every summary table of a fit into `dir` and returns the file names.
pub fn write_summaries(
    outputs: &[ChainOutput],
    data: &Dataset,
    covariate_names: &[String],
    level: f64,
    dir: &Path,
) -> Result<Vec<String>> {
    let m = outputs[0].num_states;
    let r = outputs[0].num_covariates;
    let summary = summarize_parameters(outputs, level)?;

    let mut f = create(&dir.join("emission_summary.csv"))?;
    writeln!(f, "state,mean,mean_lower,mean_upper,variance,variance_lower,variance_upper")?;
    for j in 1..=m {
        let mu = find(&summary, &format!("mu_{j}"));
        let s2 = find(&summary, &format!("sigma2_{j}"));
        writeln!(f, "{j},{},{},{},{},{},{}", mu.mean, mu.lower, mu.upper, s2.mean, s2.lower, s2.upper)?;
    }
    f.flush()?;

    let mut f = create(&dir.join("transitions.csv"))?;
    writeln!(f, "from,to,probability,lower,upper")?;
    for k in 1..=m {
        let s = find(&summary, &format!("rho_{k}"));
        writeln!(f, "initial,{k},{},{},{}", s.mean, s.lower, s.upper)?;
    }
    for j in 1..=m {
        for k in 1..=m {
            if j == k {
                writeln!(f, "{j},{k},0,0,0")?;
            } else {
                let s = find(&summary, &format!("p_{j}_{k}"));
                writeln!(f, "{j},{k},{},{},{}", s.mean, s.lower, s.upper)?;
            }
        }
    }
    f.flush()?;

    let mut f = create(&dir.join("segments.csv"))?;
    writeln!(f, "state,segments,rate_mean,rate_min,rate_max,duration_mean,duration_min,duration_max")?;
    for s in segment_statistics(outputs)? {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            s.state + 1,
            s.segments,
            s.rate_mean,
            s.rate_min,
            s.rate_max,
            s.duration_mean,
            s.duration_min,
            s.duration_max
        )?;
    }
    f.flush()?;

    let mut f = create(&dir.join("beta_summary.csv"))?;
    writeln!(f, "state,coefficient,mean,sd,lower,upper,significant")?;
    for j in 1..=m {
        for i in 0..=r {
            let s = find(&summary, &format!("beta_{j}_{i}"));
            let label = if i == 0 { "intercept" } else { covariate_names[i - 1].as_str() };
            writeln!(f, "{j},{label},{},{},{},{},{}", s.mean, s.sd, s.lower, s.upper, s.significant())?;
        }
    }
    f.flush()?;

    let states: Vec<Vec<usize>> = outputs.iter().flat_map(ChainOutput::state_matrix).collect();
    let modes = state_mode_sequence(&states, m)?;
    let mut f = create(&dir.join("state_mode.csv"))?;
    writeln!(f, "t,timestamp,y,state")?;
    for (t, s) in modes.modes.iter().enumerate() {
        let stamp = data.timestamps().map_or("", |ts| ts[t].as_str());
        writeln!(f, "{},{},{},{}", t + 1, stamp, data.y()[t], s + 1)?;
    }
    f.flush()?;
    let mut f = create(&dir.join("state_freq.csv"))?;
    modes.write_frequencies_csv(&mut f)?;
    f.flush()?;

    let mut files: Vec<String> = [
        "emission_summary.csv",
        "transitions.csv",
        "segments.csv",
        "beta_summary.csv",
        "state_mode.csv",
        "state_freq.csv",
    ]
    .map(String::from)
    .to_vec();
    if outputs.len() >= 2 {
        let conv = convergence(outputs)?;
        let mut f = create(&dir.join("diagnostics.csv"))?;
        conv.write_csv(&mut f)?;
        f.flush()?;
        files.push("diagnostics.csv".into());
    }
    Ok(files)
}
