//! Domain types of the hidden semi-Markov model.
//!
//! States are zero-based everywhere inside the library. Files written by the
//! CLI label them from 1.

use serde::{Deserialize, Serialize};

use crate::duration::{CovariateSummary, Link};
use crate::error::{HsmmError, Result};

/// Row-sum and initial-distribution tolerance.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Gaussian emission parameters, one mean and variance per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionParams {
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl EmissionParams {
    pub fn new(means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if means.len() != variances.len() {
            return Err(HsmmError::InvalidParams(format!(
                "{} means but {} variances",
                means.len(),
                variances.len()
            )));
        }
        if means.len() < 2 {
            return Err(HsmmError::InvalidParams(
                "at least two states are required".into(),
            ));
        }
        if let Some(v) = variances.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(HsmmError::InvalidParams(format!(
                "emission variances must be positive, got {v}"
            )));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(HsmmError::InvalidParams("non-finite emission mean".into()));
        }
        Ok(Self { means, variances })
    }

    pub fn num_states(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean(&self, state: usize) -> f64 {
        self.means[state]
    }

    pub fn variance(&self, state: usize) -> f64 {
        self.variances[state]
    }
}

/// Between-state transition probabilities (zero diagonal) plus the initial distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    m: usize,
    probs: Vec<f64>,
    initial: Vec<f64>,
}

fn check_simplex(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(HsmmError::InvalidParams(format!(
            "{what} has an entry outside [0, 1]"
        )));
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(HsmmError::InvalidParams(format!(
            "{what} sums to {sum}, not 1"
        )));
    }
    Ok(())
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>, initial: Vec<f64>) -> Result<Self> {
        let m = rows.len();
        if m < 2 {
            return Err(HsmmError::InvalidParams(
                "transition matrix needs at least two states".into(),
            ));
        }
        if initial.len() != m {
            return Err(HsmmError::InvalidParams(format!(
                "initial distribution has {} entries for {m} states",
                initial.len()
            )));
        }
        let mut probs = Vec::with_capacity(m * m);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(HsmmError::InvalidParams(format!(
                    "transition row {j} has {} entries for {m} states",
                    row.len()
                )));
            }
            Self::check_row(j, row)?;
            probs.extend_from_slice(row);
        }
        check_simplex(&initial, "initial distribution")?;
        Ok(Self { m, probs, initial })
    }

    /// Uniform initial distribution and uniform off-diagonal rows.
    pub fn uniform(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(HsmmError::InvalidParams(
                "transition matrix needs at least two states".into(),
            ));
        }
        let off = 1.0 / (m - 1) as f64;
        let rows = (0..m)
            .map(|j| (0..m).map(|k| if j == k { 0.0 } else { off }).collect())
            .collect();
        Self::new(rows, vec![1.0 / m as f64; m])
    }

    fn check_row(j: usize, row: &[f64]) -> Result<()> {
        if row[j] != 0.0 {
            return Err(HsmmError::InvalidParams(format!(
                "self-transition probability of state {j} must be exactly zero"
            )));
        }
        check_simplex(row, &format!("transition row {j}"))
    }

    pub fn num_states(&self) -> usize {
        self.m
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.probs[from * self.m + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.probs[from * self.m..(from + 1) * self.m]
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.m).map(|j| self.row(j).to_vec()).collect()
    }

    /// Replaces one row, re-checking the zero-diagonal and simplex invariants.
    pub fn set_row(&mut self, from: usize, row: &[f64]) -> Result<()> {
        if row.len() != self.m {
            return Err(HsmmError::InvalidParams(format!(
                "transition row {from} has {} entries for {} states",
                row.len(),
                self.m
            )));
        }
        Self::check_row(from, row)?;
        self.probs[from * self.m..(from + 1) * self.m].copy_from_slice(row);
        Ok(())
    }

    pub fn set_initial(&mut self, initial: &[f64]) -> Result<()> {
        if initial.len() != self.m {
            return Err(HsmmError::InvalidParams(
                "initial distribution length mismatch".into(),
            ));
        }
        check_simplex(initial, "initial distribution")?;
        self.initial.copy_from_slice(initial);
        Ok(())
    }
}

/// Covariate-dependent duration model: the coefficient matrix `B` (one row per
/// state, column 0 the intercept), the covariate summary and the link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationModel {
    coefficients: Vec<Vec<f64>>,
    pub summary: CovariateSummary,
    pub link: Link,
}

impl DurationModel {
    pub fn new(coefficients: Vec<Vec<f64>>, summary: CovariateSummary, link: Link) -> Result<Self> {
        let width = coefficients.first().map(Vec::len).unwrap_or(0);
        if coefficients.len() < 2 || width == 0 {
            return Err(HsmmError::InvalidParams(
                "duration coefficients need at least two states and an intercept".into(),
            ));
        }
        if coefficients.iter().any(|row| row.len() != width) {
            return Err(HsmmError::InvalidParams(
                "duration coefficient rows differ in length".into(),
            ));
        }
        if coefficients.iter().flatten().any(|b| !b.is_finite()) {
            return Err(HsmmError::InvalidParams(
                "non-finite duration coefficient".into(),
            ));
        }
        summary.validate()?;
        Ok(Self {
            coefficients,
            summary,
            link,
        })
    }

    /// Covariate-free model with constant rate `phi[j]` per state (intercept `ln φ_j`).
    pub fn constant(phi: &[f64]) -> Result<Self> {
        if let Some(p) = phi.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(HsmmError::InvalidParams(format!(
                "constant duration rate must be positive, got {p}"
            )));
        }
        Self::new(
            phi.iter().map(|p| vec![p.ln()]).collect(),
            CovariateSummary::LastValue,
            Link::Exp,
        )
    }

    pub fn num_states(&self) -> usize {
        self.coefficients.len()
    }

    /// Number of covariates `r` (row width minus the intercept).
    pub fn num_covariates(&self) -> usize {
        self.coefficients[0].len() - 1
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.coefficients[state]
    }

    pub fn set_row(&mut self, state: usize, row: &[f64]) -> Result<()> {
        if row.len() != self.coefficients[state].len() || row.iter().any(|b| !b.is_finite()) {
            return Err(HsmmError::InvalidParams(format!(
                "invalid coefficient row for state {state}"
            )));
        }
        self.coefficients[state].copy_from_slice(row);
        Ok(())
    }
}

/// One run of a single latent state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub state: usize,
    pub duration: usize,
}

/// The latent trajectory as `(state, duration)` segments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentSequence {
    segments: Vec<Segment>,
}

impl SegmentSequence {
    /// Checks durations are positive and adjacent states differ.
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(HsmmError::InvalidSegments("no segments".into()));
        }
        for (q, seg) in segments.iter().enumerate() {
            if seg.duration == 0 {
                return Err(HsmmError::InvalidSegments(format!(
                    "segment {q} has zero duration"
                )));
            }
            if q > 0 && segments[q - 1].state == seg.state {
                return Err(HsmmError::InvalidSegments(format!(
                    "segments {} and {q} share state {}; adjacent states must differ",
                    q - 1,
                    seg.state
                )));
            }
        }
        Ok(Self { segments })
    }

    /// Builds a sequence from `(state, duration)` pairs.
    pub fn from_pairs(pairs: &[(usize, usize)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(state, duration)| Segment { state, duration })
                .collect(),
        )
    }

    /// Run-length encodes a per-time state path.
    pub fn from_states(states: &[usize]) -> Result<Self> {
        let mut segments: Vec<Segment> = Vec::new();
        for &s in states {
            match segments.last_mut() {
                Some(last) if last.state == s => last.duration += 1,
                _ => segments.push(Segment {
                    state: s,
                    duration: 1,
                }),
            }
        }
        Self::new(segments)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Total number of time steps covered.
    pub fn total_duration(&self) -> usize {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Cumulative endpoints `T_1..T_Q`.
    pub fn endpoints(&self) -> Vec<usize> {
        self.segments
            .iter()
            .scan(0, |acc, s| {
                *acc += s.duration;
                Some(*acc)
            })
            .collect()
    }

    /// Zero-based start index of every segment (`T_{q-1}`, with `T_0 = 0`).
    pub fn starts(&self) -> Vec<usize> {
        self.segments
            .iter()
            .scan(0, |acc, s| {
                let start = *acc;
                *acc += s.duration;
                Some(start)
            })
            .collect()
    }

    /// Expands to one state per time step.
    pub fn to_states(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.total_duration());
        for s in &self.segments {
            out.extend(std::iter::repeat_n(s.state, s.duration));
        }
        out
    }

    /// Errors unless the sequence covers exactly `n` steps with states below `m`.
    pub fn check_against(&self, n: usize, m: usize) -> Result<()> {
        let total = self.total_duration();
        if total != n {
            return Err(HsmmError::InvalidSegments(format!(
                "durations sum to {total} but the series has {n} observations"
            )));
        }
        if let Some(s) = self.segments.iter().find(|s| s.state >= m) {
            return Err(HsmmError::InvalidSegments(format!(
                "state {} out of range for {m} states",
                s.state
            )));
        }
        Ok(())
    }

    /// Applies a relabelling `new = map[old]`.
    pub fn relabel(&self, map: &[usize]) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    state: map[s.state],
                    duration: s.duration,
                })
                .collect(),
        }
    }
}

/// Observations with their aligned covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    y: Vec<f64>,
    covariates: Vec<f64>,
    r: usize,
    x0: Vec<f64>,
    timestamps: Option<Vec<String>>,
}

impl Dataset {
    /// `covariates` holds one row of `r` values per observation. `x0` defaults to the first row.
    pub fn new(y: Vec<f64>, covariates: Vec<Vec<f64>>, x0: Option<Vec<f64>>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(HsmmError::InvalidParams("empty observation series".into()));
        }
        let r = covariates.first().map(Vec::len).unwrap_or(0);
        if !covariates.is_empty() && covariates.len() != n {
            return Err(HsmmError::InvalidParams(format!(
                "{} covariate rows for {n} observations",
                covariates.len()
            )));
        }
        if covariates.iter().any(|row| row.len() != r) {
            return Err(HsmmError::InvalidParams(
                "covariate rows differ in length".into(),
            ));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(HsmmError::InvalidParams("non-finite observation".into()));
        }
        let flat: Vec<f64> = covariates.into_iter().flatten().collect();
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(HsmmError::InvalidParams("non-finite covariate".into()));
        }
        let x0 = match x0 {
            Some(x0) => {
                if x0.len() != r || x0.iter().any(|v| !v.is_finite()) {
                    return Err(HsmmError::InvalidParams(
                        "initial covariate row has the wrong length or is non-finite".into(),
                    ));
                }
                x0
            }
            None => flat[..r].to_vec(),
        };
        Ok(Self {
            y,
            covariates: flat,
            r,
            x0,
            timestamps: None,
        })
    }

    /// Observations without covariates.
    pub fn without_covariates(y: Vec<f64>) -> Result<Self> {
        Self::new(y, Vec::new(), None)
    }

    pub fn with_timestamps(mut self, timestamps: Vec<String>) -> Result<Self> {
        if timestamps.len() != self.y.len() {
            return Err(HsmmError::InvalidParams(
                "timestamp count differs from observation count".into(),
            ));
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn num_covariates(&self) -> usize {
        self.r
    }

    pub fn covariate_row(&self, t: usize) -> &[f64] {
        &self.covariates[t * self.r..(t + 1) * self.r]
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }
}

/// Every parameter of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub emission: EmissionParams,
    pub transitions: TransitionMatrix,
    pub durations: DurationModel,
}

impl ModelParams {
    pub fn new(
        emission: EmissionParams,
        transitions: TransitionMatrix,
        durations: DurationModel,
    ) -> Result<Self> {
        let m = emission.num_states();
        if transitions.num_states() != m || durations.num_states() != m {
            return Err(HsmmError::InvalidParams(format!(
                "state counts disagree: emission {m}, transitions {}, durations {}",
                transitions.num_states(),
                durations.num_states()
            )));
        }
        Ok(Self {
            emission,
            transitions,
            durations,
        })
    }

    pub fn num_states(&self) -> usize {
        self.emission.num_states()
    }

    /// Errors if the duration model and the data disagree on `r`.
    pub fn check_data(&self, data: &Dataset) -> Result<()> {
        if self.durations.num_covariates() != data.num_covariates() {
            return Err(HsmmError::InvalidParams(format!(
                "duration model uses {} covariates but the data has {}",
                self.durations.num_covariates(),
                data.num_covariates()
            )));
        }
        Ok(())
    }

    /// Permutes state labels: old state `perm[i]` becomes new state `i`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let m = self.num_states();
        let emission = EmissionParams::new(
            perm.iter().map(|&o| self.emission.mean(o)).collect(),
            perm.iter().map(|&o| self.emission.variance(o)).collect(),
        )?;
        let rows = (0..m)
            .map(|i| (0..m).map(|k| self.transitions.prob(perm[i], perm[k])).collect())
            .collect();
        let initial = perm.iter().map(|&o| self.transitions.initial()[o]).collect();
        let transitions = TransitionMatrix::new(rows, initial)?;
        let durations = DurationModel::new(
            perm.iter().map(|&o| self.durations.row(o).to_vec()).collect(),
            self.durations.summary,
            self.durations.link,
        )?;
        Ok(Self {
            emission,
            transitions,
            durations,
        })
    }
}

/// Inverse of a permutation.
pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_matrix_rejects_self_transitions() {
        let err = TransitionMatrix::new(vec![vec![0.5, 0.5], vec![1.0, 0.0]], vec![0.5, 0.5]);
        assert!(err.is_err());
        let mut tm = TransitionMatrix::uniform(3).unwrap();
        assert!(tm.set_row(1, &[0.2, 0.0, 0.8]).is_ok());
        assert!(tm.set_row(1, &[0.2, 0.1, 0.7]).is_err());
        assert!(tm.set_row(0, &[0.0, 0.2, 0.7]).is_err());
        assert!(tm.set_initial(&[0.5, 0.5, 0.1]).is_err());
        assert_eq!(tm.row(1), &[0.2, 0.0, 0.8]);
    }

    #[test]
    fn segment_invariants() {
        assert!(SegmentSequence::from_pairs(&[(0, 2), (0, 1)]).is_err());
        assert!(SegmentSequence::from_pairs(&[(0, 0)]).is_err());
        let seq = SegmentSequence::from_pairs(&[(0, 2), (1, 3), (0, 1)]).unwrap();
        assert_eq!(seq.endpoints(), vec![2, 5, 6]);
        assert_eq!(seq.starts(), vec![0, 2, 5]);
        assert_eq!(seq.to_states(), vec![0, 0, 1, 1, 1, 0]);
        assert_eq!(SegmentSequence::from_states(&seq.to_states()).unwrap(), seq);
        assert!(seq.check_against(6, 2).is_ok());
        assert!(seq.check_against(7, 2).is_err());
        assert!(seq.check_against(6, 1).is_err());
    }

    #[test]
    fn dataset_defaults_x0_to_first_row() {
        let d = Dataset::new(vec![1.0, 2.0], vec![vec![3.0, 4.0], vec![5.0, 6.0]], None).unwrap();
        assert_eq!(d.x0(), &[3.0, 4.0]);
        assert_eq!(d.covariate_row(1), &[5.0, 6.0]);
        assert!(Dataset::new(vec![1.0], vec![vec![1.0], vec![2.0]], None).is_err());
        assert!(Dataset::new(vec![f64::NAN], vec![], None).is_err());
    }

    #[test]
    fn emission_params_need_positive_variance() {
        assert!(EmissionParams::new(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(EmissionParams::new(vec![0.0], vec![1.0]).is_err());
    }
}
