//! Posterior summaries: intervals, modal state paths and coverage.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{HsmmError, Result};
use crate::sampler::output::ChainOutput;

/// Sample quantile of sorted data by linear interpolation between order
/// statistics: position `h = (N - 1) p`, value `x[⌊h⌋] + (h - ⌊h⌋)(x[⌊h⌋+1] - x[⌊h⌋])`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tailed interval holding `level` of the draws.
pub fn credible_interval(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    if draws.len() < 2 {
        return Err(HsmmError::Precondition(format!(
            "at least two draws are needed, got {}",
            draws.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(HsmmError::Precondition(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    if draws.iter().any(|d| d.is_nan()) {
        return Err(HsmmError::Domain("draws contain NaN".into()));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&sorted, tail), quantile_sorted(&sorted, 1.0 - tail)))
}

/// Percentage of closed intervals containing `truth`.
pub fn empirical_coverage(intervals: &[(f64, f64)], truth: f64) -> Result<f64> {
    if intervals.is_empty() {
        return Err(HsmmError::Precondition("no intervals".into()));
    }
    let hits = intervals
        .iter()
        .filter(|(lo, hi)| *lo <= truth && truth <= *hi)
        .count();
    Ok(100.0 * hits as f64 / intervals.len() as f64)
}

/// Per-time modal state and state frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateModes {
    /// Modal state per time; ties go to the lower label.
    pub modes: Vec<usize>,
    /// `frequencies[t][j]`: fraction of draws in state `j` at time `t`.
    pub frequencies: Vec<Vec<f64>>,
}

impl StateModes {
    /// Long format `t,state,fraction` with one-based time and state.
    pub fn write_frequencies_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,state,fraction")?;
        for (t, row) in self.frequencies.iter().enumerate() {
            for (j, f) in row.iter().enumerate() {
                writeln!(out, "{},{},{}", t + 1, j + 1, f)?;
            }
        }
        Ok(())
    }

    /// `t,state` with one-based time and state, optionally with observation values.
    pub fn write_modes_csv<W: Write>(&self, y: Option<&[f64]>, mut out: W) -> io::Result<()> {
        match y {
            Some(_) => writeln!(out, "t,y,state")?,
            None => writeln!(out, "t,state")?,
        }
        for (t, s) in self.modes.iter().enumerate() {
            match y {
                Some(y) => writeln!(out, "{},{},{}", t + 1, y[t], s + 1)?,
                None => writeln!(out, "{},{}", t + 1, s + 1)?,
            }
        }
        Ok(())
    }
}

/// Modal state path from per-iteration state draws (`draws[iteration][t]`).
pub fn state_mode_sequence(draws: &[Vec<usize>], m: usize) -> Result<StateModes> {
    let first = draws
        .first()
        .ok_or_else(|| HsmmError::Precondition("no saved iterations".into()))?;
    let n = first.len();
    let mut counts = vec![vec![0usize; m]; n];
    for d in draws {
        if d.len() != n {
            return Err(HsmmError::Precondition("state draws differ in length".into()));
        }
        for (t, &s) in d.iter().enumerate() {
            if s >= m {
                return Err(HsmmError::InvalidSegments(format!("state {s} out of range")));
            }
            counts[t][s] += 1;
        }
    }
    let total = draws.len() as f64;
    let modes = counts
        .iter()
        .map(|row| {
            let mut best = 0;
            for (j, &c) in row.iter().enumerate() {
                if c > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    let frequencies = counts
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 / total).collect())
        .collect();
    Ok(StateModes { modes, frequencies })
}

/// Posterior mean, standard deviation and equal-tailed interval of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ParameterSummary {
    pub fn from_draws(name: impl Into<String>, draws: &[f64], level: f64) -> Result<Self> {
        let (lower, upper) = credible_interval(draws, level)?;
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        Ok(Self {
            name: name.into(),
            mean,
            sd,
            lower,
            upper,
        })
    }

    /// The interval excludes zero.
    pub fn significant(&self) -> bool {
        self.lower > 0.0 || self.upper < 0.0
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.lower <= truth && truth <= self.upper
    }
}

/// Summaries of every parameter column, pooling the given chains.
pub fn summarize_parameters(outputs: &[ChainOutput], level: f64) -> Result<Vec<ParameterSummary>> {
    let first = outputs
        .first()
        .ok_or_else(|| HsmmError::Precondition("no chains to summarize".into()))?;
    let names = first.parameter_names();
    let rows: Vec<Vec<f64>> = outputs.iter().flat_map(ChainOutput::parameter_matrix).collect();
    names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let column: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            ParameterSummary::from_draws(name.clone(), &column, level)
        })
        .collect()
}

/// Per-state segment statistics averaged over saved draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub state: usize,
    /// Mean number of segments per draw.
    pub segments: f64,
    pub rate_mean: f64,
    pub rate_min: f64,
    pub rate_max: f64,
    pub duration_mean: f64,
    pub duration_min: f64,
    pub duration_max: f64,
}

/// Segment counts, duration rates and durations per state. Each statistic is
/// computed within a draw, then averaged over the draws where the state occurs.
pub fn segment_statistics(outputs: &[ChainOutput]) -> Result<Vec<SegmentStats>> {
    let first = outputs
        .first()
        .ok_or_else(|| HsmmError::Precondition("no chains to summarize".into()))?;
    let m = first.num_states;
    let mut acc = vec![[0.0f64; 7]; m];
    let mut present = vec![0usize; m];
    let mut total_draws = 0usize;
    for out in outputs {
        for d in &out.draws {
            total_draws += 1;
            let mut per = vec![Vec::new(); m];
            for (seg, &phi) in d.seq.segments().iter().zip(&d.phi) {
                per[seg.state].push((phi, seg.duration as f64));
            }
            for (j, segs) in per.iter().enumerate() {
                acc[j][0] += segs.len() as f64;
                if segs.is_empty() {
                    continue;
                }
                present[j] += 1;
                let k = segs.len() as f64;
                let rates = segs.iter().map(|s| s.0);
                let durs = segs.iter().map(|s| s.1);
                acc[j][1] += rates.clone().sum::<f64>() / k;
                acc[j][2] += rates.clone().fold(f64::INFINITY, f64::min);
                acc[j][3] += rates.fold(f64::NEG_INFINITY, f64::max);
                acc[j][4] += durs.clone().sum::<f64>() / k;
                acc[j][5] += durs.clone().fold(f64::INFINITY, f64::min);
                acc[j][6] += durs.fold(f64::NEG_INFINITY, f64::max);
            }
        }
    }
    if total_draws == 0 {
        return Err(HsmmError::Precondition("no saved draws".into()));
    }
    Ok((0..m)
        .map(|j| {
            let p = present[j].max(1) as f64;
            let stat = |i: usize| if present[j] == 0 { f64::NAN } else { acc[j][i] / p };
            SegmentStats {
                state: j,
                segments: acc[j][0] / total_draws as f64,
                rate_mean: stat(1),
                rate_min: stat(2),
                rate_max: stat(3),
                duration_mean: stat(4),
                duration_min: stat(5),
                duration_max: stat(6),
            }
        })
        .collect())
}
