//! Saved draws of a chain and their CSV encodings.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::duration::{CovariateSummary, Link};
use crate::error::{HsmmError, Result};
use crate::model::{DurationModel, EmissionParams, ModelParams, Segment, SegmentSequence, TransitionMatrix};

/// One saved iteration, with states already aligned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedDraw {
    /// Zero-based iteration index within the whole run.
    pub iteration: usize,
    pub params: ModelParams,
    pub seq: SegmentSequence,
    /// Duration rate of every segment of `seq`.
    pub phi: Vec<f64>,
    /// Size of the emission subsample.
    pub subsample_size: usize,
    /// Subsampled observations per state.
    pub state_counts: Vec<usize>,
}

/// Counters of recoverable numerical events over a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounters {
    /// Coefficient proposals rejected because the ratio was not finite.
    pub nonfinite_ratios: usize,
    /// (state, time) duration supports cut short by the global cap.
    pub truncation_warnings: usize,
    /// Duration rates that hit the clamp.
    pub clamped_rates: usize,
    /// Iterations whose subsample size was raised to one.
    pub floored_subsamples: usize,
}

impl RunCounters {
    pub(crate) fn absorb(&mut self, other: &RunCounters) {
        self.nonfinite_ratios += other.nonfinite_ratios;
        self.truncation_warnings += other.truncation_warnings;
        self.clamped_rates += other.clamped_rates;
        self.floored_subsamples += other.floored_subsamples;
    }
}

/// The output of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub num_states: usize,
    pub num_covariates: usize,
    pub draws: Vec<SavedDraw>,
    /// Coefficient acceptance rate per sampler label after adaptation.
    pub acceptance_rates: Vec<f64>,
    /// Coefficient acceptance rate per sampler label during adaptation.
    pub adaptive_acceptance_rates: Vec<f64>,
    /// Frozen proposal scales.
    pub proposal_scales: Vec<f64>,
    pub counters: RunCounters,
}

/// Column names of [`parameter_vector`], one-based state labels.
pub fn parameter_names(m: usize, r: usize) -> Vec<String> {
    let mut names = Vec::new();
    names.extend((1..=m).map(|j| format!("mu_{j}")));
    names.extend((1..=m).map(|j| format!("sigma2_{j}")));
    names.extend((1..=m).map(|j| format!("rho_{j}")));
    for j in 1..=m {
        for k in (1..=m).filter(|&k| k != j) {
            names.push(format!("p_{j}_{k}"));
        }
    }
    for j in 1..=m {
        for i in 0..=r {
            names.push(format!("beta_{j}_{i}"));
        }
    }
    names
}

/// Every scalar parameter in the order of [`parameter_names`].
pub fn parameter_vector(params: &ModelParams) -> Vec<f64> {
    let m = params.num_states();
    let mut v = Vec::new();
    v.extend_from_slice(params.emission.means());
    v.extend_from_slice(params.emission.variances());
    v.extend_from_slice(params.transitions.initial());
    for j in 0..m {
        for k in (0..m).filter(|&k| k != j) {
            v.push(params.transitions.prob(j, k));
        }
    }
    for row in params.durations.coefficients() {
        v.extend_from_slice(row);
    }
    v
}

/// Run-length encoding `state:duration;...` with one-based states.
pub fn encode_segments(seq: &SegmentSequence) -> String {
    let parts: Vec<String> = seq
        .segments()
        .iter()
        .map(|s| format!("{}:{}", s.state + 1, s.duration))
        .collect();
    parts.join(";")
}

/// Inverse of [`encode_segments`].
pub fn decode_segments(text: &str) -> Result<SegmentSequence> {
    let bad = || HsmmError::InvalidSegments(format!("cannot parse segments {text:?}"));
    let segments = text
        .split(';')
        .map(|part| {
            let (s, d) = part.split_once(':').ok_or_else(bad)?;
            let state: usize = s.trim().parse().map_err(|_| bad())?;
            let duration: usize = d.trim().parse().map_err(|_| bad())?;
            if state == 0 {
                return Err(bad());
            }
            Ok(Segment {
                state: state - 1,
                duration,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SegmentSequence::new(segments)
}

/// Inverse of [`parameter_vector`] for `m` states and `r` covariates.
pub fn params_from_vector(
    m: usize,
    r: usize,
    v: &[f64],
    summary: CovariateSummary,
    link: Link,
) -> Result<ModelParams> {
    let expected = parameter_names(m, r).len();
    if v.len() != expected {
        return Err(HsmmError::InvalidParams(format!(
            "{} values for a layout of {expected}",
            v.len()
        )));
    }
    let (means, rest) = v.split_at(m);
    let (variances, rest) = rest.split_at(m);
    let (initial, rest) = rest.split_at(m);
    let (offdiag, coefs) = rest.split_at(m * (m - 1));
    let mut it = offdiag.iter();
    let rows = (0..m)
        .map(|j| {
            (0..m)
                .map(|k| if k == j { 0.0 } else { *it.next().expect("m - 1 entries per row") })
                .collect()
        })
        .collect();
    ModelParams::new(
        EmissionParams::new(means.to_vec(), variances.to_vec())?,
        TransitionMatrix::new(rows, initial.to_vec())?,
        DurationModel::new(coefs.chunks(r + 1).map(<[f64]>::to_vec).collect(), summary, link)?,
    )
}

impl ChainOutput {
    pub fn parameter_names(&self) -> Vec<String> {
        parameter_names(self.num_states, self.num_covariates)
    }

    /// One row per saved draw.
    pub fn parameter_matrix(&self) -> Vec<Vec<f64>> {
        self.draws.iter().map(|d| parameter_vector(&d.params)).collect()
    }

    /// Columnar draws: `iteration`, every parameter, then `subsample_size` and `n_sub_j`.
    pub fn write_draws_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header = vec!["iteration".to_string()];
        header.extend(self.parameter_names());
        header.push("subsample_size".into());
        header.extend((1..=self.num_states).map(|j| format!("n_sub_{j}")));
        writeln!(out, "{}", header.join(","))?;
        for d in &self.draws {
            let mut row = vec![d.iteration.to_string()];
            row.extend(parameter_vector(&d.params).iter().map(f64::to_string));
            row.push(d.subsample_size.to_string());
            row.extend(d.state_counts.iter().map(usize::to_string));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// One run-length encoded segmentation per saved draw.
    pub fn write_state_draws<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "iteration,segments")?;
        for d in &self.draws {
            writeln!(out, "{},{}", d.iteration, encode_segments(&d.seq))?;
        }
        Ok(())
    }

    /// Per-time state of every saved draw (zero-based labels).
    pub fn state_matrix(&self) -> Vec<Vec<usize>> {
        self.draws.iter().map(|d| d.seq.to_states()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DurationModel, EmissionParams, TransitionMatrix};

    #[test]
    fn names_match_vector_layout() {
        let params = ModelParams::new(
            EmissionParams::new(vec![1.0, 2.0, 3.0], vec![0.5; 3]).unwrap(),
            TransitionMatrix::uniform(3).unwrap(),
            DurationModel::constant(&[2.0, 3.0, 4.0]).unwrap(),
        )
        .unwrap();
        let names = parameter_names(3, 0);
        let v = parameter_vector(&params);
        assert_eq!(names.len(), v.len());
        assert_eq!(names[0], "mu_1");
        assert_eq!(names[9], "p_1_2");
        assert_eq!(names.last().unwrap(), "beta_3_0");
        assert_eq!(v[9], 0.5);
    }

    #[test]
    fn segment_encoding() {
        let seq = SegmentSequence::from_pairs(&[(0, 3), (2, 1)]).unwrap();
        assert_eq!(encode_segments(&seq), "1:3;3:1");
        assert_eq!(decode_segments("1:3;3:1").unwrap(), seq);
        assert!(decode_segments("0:3").is_err());
        assert!(decode_segments("1:3;1:2").is_err());
        assert!(decode_segments("1-3").is_err());
    }

    #[test]
    fn vector_layout_inverts() {
        let params = ModelParams::new(
            EmissionParams::new(vec![1.0, 2.0, 3.0], vec![0.5, 0.6, 0.7]).unwrap(),
            TransitionMatrix::new(
                vec![vec![0.0, 0.3, 0.7], vec![0.6, 0.0, 0.4], vec![0.5, 0.5, 0.0]],
                vec![0.2, 0.3, 0.5],
            )
            .unwrap(),
            DurationModel::new(vec![vec![1.0, 0.1], vec![2.0, 0.2], vec![3.0, 0.3]], Default::default(), Default::default())
                .unwrap(),
        )
        .unwrap();
        let v = parameter_vector(&params);
        let back = params_from_vector(3, 1, &v, Default::default(), Default::default()).unwrap();
        assert_eq!(back, params);
        assert!(params_from_vector(3, 0, &v, Default::default(), Default::default()).is_err());
    }
}
