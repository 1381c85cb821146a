//! Synthetic series with known segments and AR(1) dependence inside segments.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::duration::rate_from_features;
use crate::error::{HsmmError, Result};
use crate::model::{
    Dataset, DurationModel, EmissionParams, ModelParams, Segment, SegmentSequence, TransitionMatrix,
};
use crate::ztp::ztp_sample;

/// Exogenous covariates: independent stationary AR(1) series with unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateGen {
    pub autocorrelation: f64,
}

/// What to simulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub params: ModelParams,
    /// Lag-one autocorrelation of the emission noise inside a segment.
    pub psi: f64,
    pub target_n: usize,
    /// Clip the last segment so the series has exactly `target_n` points.
    pub truncate_final: bool,
    /// Required when the duration model uses covariates.
    pub covariates: Option<CovariateGen>,
}

impl SimSpec {
    /// Covariate-free spec with a constant duration rate per state.
    pub fn constant_rates(
        emission: EmissionParams,
        transitions: TransitionMatrix,
        phi: &[f64],
        psi: f64,
        target_n: usize,
    ) -> Result<Self> {
        let params = ModelParams::new(emission, transitions, DurationModel::constant(phi)?)?;
        Ok(Self {
            params,
            psi,
            target_n,
            truncate_final: true,
            covariates: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.psi.abs() < 1.0) {
            return Err(HsmmError::config("psi", format!("must satisfy |psi| < 1, got {}", self.psi)));
        }
        let m = self.params.num_states();
        if self.target_n < m {
            return Err(HsmmError::config(
                "target_n",
                format!("must be at least the number of states ({m})"),
            ));
        }
        let r = self.params.durations.num_covariates();
        match self.covariates {
            None if r > 0 => Err(HsmmError::config(
                "covariates",
                format!("the duration model uses {r} covariates but no generator was given"),
            )),
            Some(g) if !(g.autocorrelation.abs() < 1.0) => Err(HsmmError::config(
                "covariates.autocorrelation",
                "must lie strictly between -1 and 1",
            )),
            _ => self.params.durations.summary.validate(),
        }
    }
}

/// A simulated series and its true segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub data: Dataset,
    pub truth: SegmentSequence,
}

/// `length` observations `μ + e_t` with `e_t = ψ e_{t-1} + ε_t`, `ε_t ~ N(0, σ²(1 − ψ²))`.
///
/// The first deviation continues from `carryover` when given, otherwise it is a
/// stationary `N(0, σ²)` draw.
pub fn ar1_segment<R: Rng + ?Sized>(
    length: usize,
    mu: f64,
    sigma2: f64,
    psi: f64,
    carryover: Option<f64>,
    rng: &mut R,
) -> Vec<f64> {
    let sd = sigma2.sqrt();
    let innovation_sd = (sigma2 * (1.0 - psi * psi)).sqrt();
    let mut out = Vec::with_capacity(length);
    let mut e = match carryover {
        Some(prev) => {
            let z: f64 = StandardNormal.sample(rng);
            psi * prev + innovation_sd * z
        }
        None => {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        }
    };
    for i in 0..length {
        if i > 0 {
            let z: f64 = StandardNormal.sample(rng);
            e = psi * e + innovation_sd * z;
        }
        out.push(mu + e);
    }
    out
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = rng.random();
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = i;
            if u < p {
                return i;
            }
            u -= p;
        }
    }
    last
}

struct CovariateStream {
    rows: Vec<Vec<f64>>,
    innovation: Normal<f64>,
    phi: f64,
    r: usize,
}

impl CovariateStream {
    fn new(r: usize, phi: f64) -> Self {
        Self {
            rows: Vec::new(),
            innovation: Normal::new(0.0, (1.0 - phi * phi).sqrt()).expect("|phi| < 1"),
            phi,
            r,
        }
    }

    fn extend_to<R: Rng + ?Sized>(&mut self, len: usize, rng: &mut R) {
        while self.rows.len() < len {
            let row = match self.rows.last() {
                None => (0..self.r).map(|_| StandardNormal.sample(rng)).collect(),
                Some(prev) => prev
                    .iter()
                    .map(|&p| self.phi * p + self.innovation.sample(rng))
                    .collect(),
            };
            self.rows.push(row);
        }
    }
}

/// Generates a series: `S_1 ~ ρ`, a duration from the rate at the segment
/// start, that many AR(1) observations, the next state from `P`, and so on
/// until `target_n` observations exist.
pub fn simulate<R: Rng + ?Sized>(spec: &SimSpec, rng: &mut R) -> Result<Simulation> {
    spec.validate()?;
    let params = &spec.params;
    let durations = &params.durations;
    let r = durations.num_covariates();
    let mut covs = CovariateStream::new(r, spec.covariates.map_or(0.0, |g| g.autocorrelation));
    covs.extend_to(1, rng);

    let mut y = Vec::with_capacity(spec.target_n);
    let mut segments = Vec::new();
    let mut state = sample_index(params.transitions.initial(), rng);
    loop {
        let start = y.len();
        let phi = {
            let from = start.saturating_sub(durations.summary.rows_needed());
            let history: Vec<&[f64]> = covs.rows[from..start].iter().map(Vec::as_slice).collect();
            let features = durations.summary.summarize(&history, Some(&covs.rows[0]))?;
            rate_from_features(durations.row(state), &features, durations.link).value
        };
        let mut tau = ztp_sample(phi, rng)? as usize;
        if spec.truncate_final {
            tau = tau.min(spec.target_n - start);
        }
        y.extend(ar1_segment(
            tau,
            params.emission.mean(state),
            params.emission.variance(state),
            spec.psi,
            None,
            rng,
        ));
        segments.push(Segment { state, duration: tau });
        covs.extend_to(y.len(), rng);
        if y.len() >= spec.target_n {
            break;
        }
        state = sample_index(params.transitions.row(state), rng);
    }
    let x0 = covs.rows[0].clone();
    covs.rows.truncate(y.len());
    let data = Dataset::new(y, covs.rows, Some(x0))?;
    Ok(Simulation {
        data,
        truth: SegmentSequence::new(segments)?,
    })
}

/// Observations as `t,y,x_1..x_r,state` (one-based time and state).
pub fn write_observations_csv<W: Write>(sim: &Simulation, mut out: W) -> io::Result<()> {
    let r = sim.data.num_covariates();
    let mut header = vec!["t".to_string(), "y".to_string()];
    header.extend((1..=r).map(|i| format!("x_{i}")));
    header.push("state".into());
    writeln!(out, "{}", header.join(","))?;
    for (t, (&y, s)) in sim.data.y().iter().zip(sim.truth.to_states()).enumerate() {
        let mut row = vec![(t + 1).to_string(), y.to_string()];
        row.extend(sim.data.covariate_row(t).iter().map(f64::to_string));
        row.push((s + 1).to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// True segments as `segment,state,start,end,duration` (one-based, inclusive end).
pub fn write_segments_csv<W: Write>(seq: &SegmentSequence, mut out: W) -> io::Result<()> {
    writeln!(out, "segment,state,start,end,duration")?;
    for (q, (seg, start)) in seq.segments().iter().zip(seq.starts()).enumerate() {
        writeln!(
            out,
            "{},{},{},{},{}",
            q + 1,
            seg.state + 1,
            start + 1,
            start + seg.duration,
            seg.duration
        )?;
    }
    Ok(())
}
