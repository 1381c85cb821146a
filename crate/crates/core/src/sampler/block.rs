//! Exact block draw of the segment sequence given every other parameter.
//!
//! Backward messages over (time, state), then forward sampling:
//!
//! ```text
//! B*_t(j) = Σ_d h(d | φ_j(t)) · f(y_{t..t+d} | j) · B_{t+d}(j)     new segment of j at t
//! B_t(j)  = Σ_{k≠j} p_{jk} · B*_t(k)                              a segment of j ended at t-1
//! B_n(j)  = 1
//! ```
//!
//! `φ_j(t)` is the rate a state-`j` segment starting at `t` would have, computed
//! from the covariates observed before `t`. The final segment is weighted by the
//! full duration pmf, as in the joint likelihood. Duration support per
//! (state, time) stops where the upper-tail mass drops below `support_tail`.
//!
//! Messages are kept in linear space and rescaled at every time step: emission
//! densities are divided by their per-time maximum and `B*_t` by its largest
//! entry. The log of every scale factor is accumulated for the evidence.

use std::f64::consts::PI;

use rand::Rng;

use crate::duration::FeatureTable;
use crate::error::{HsmmError, Result};
use crate::model::{Dataset, ModelParams, Segment, SegmentSequence};
use crate::ztp::ln_truncation_norm;

/// Below this log-mass a duration term is treated as zero.
const LN_NEGLIGIBLE: f64 = -700.0;
/// Emission products below this end the duration sum.
const PRODUCT_FLOOR: f64 = 1e-300;

/// Duration-support settings of the block sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockOptions {
    /// Upper-tail duration mass that may be dropped.
    pub support_tail: f64,
    /// Optional global cap on durations.
    pub duration_cap: Option<usize>,
}

impl Default for BlockOptions {
    fn default() -> Self {
        Self {
            support_tail: 1e-10,
            duration_cap: None,
        }
    }
}

/// A sampled segmentation with bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDraw {
    pub seq: SegmentSequence,
    /// (state, time) pairs whose support was cut by `duration_cap` before reaching `support_tail`.
    pub truncation_warnings: usize,
    /// (state, time) rates that hit a clamp.
    pub clamped_rates: usize,
    /// `ln p(y | parameters)` with states and durations summed out.
    pub ln_evidence: f64,
}

/// Samples an index with probability proportional to `weights[i]`.
fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = Some(i);
            if u < w {
                return Some(i);
            }
            u -= w;
        }
    }
    last
}

/// Duration support of a zero-truncated Poisson with rate `phi`.
///
/// Returns `(cap, start, h(start), reached)`: `cap` is the smallest `d ≤ limit`
/// with `P(τ ≤ d) ≥ target`, masses below `e^-700` before `start` are treated
/// as zero, and `reached` tells whether the target was met within `limit`.
#[inline]
fn support(phi: f64, limit: usize, target: f64, inv_int: &[f64], ln_int: &[f64]) -> (usize, usize, f64, bool) {
    let ln_phi = phi.ln();
    let mut ln_mass = ln_phi - phi - ln_truncation_norm(phi);
    let mut start = 1;
    while ln_mass <= LN_NEGLIGIBLE && start < limit {
        start += 1;
        ln_mass += ln_phi - ln_int[start];
    }
    let first = if ln_mass > LN_NEGLIGIBLE { ln_mass.exp() } else { 0.0 };
    let mut mass = first;
    let mut cdf = mass;
    let mut d = start;
    while d < limit && cdf < target {
        d += 1;
        mass *= phi * inv_int[d];
        cdf += mass;
    }
    (d, start, first, cdf >= target)
}

/// Reusable buffers for repeated block draws on series of one length.
#[derive(Debug, Clone)]
pub struct BlockSampler {
    n: usize,
    m: usize,
    /// Duration rate `φ_j(t)` at `j * n + t`.
    phi: Vec<f64>,
    /// Support size at `j * n + t`.
    caps: Vec<usize>,
    /// Scaled emission density at `j * n + t`.
    emit: Vec<f64>,
    /// Scaled `B*` at `j * (n + 1) + t`.
    bstar: Vec<f64>,
    /// Scaled `B` at `j * (n + 1) + t`.
    b: Vec<f64>,
    /// Log scale factor per time.
    ln_scale: Vec<f64>,
    inv_int: Vec<f64>,
    ln_int: Vec<f64>,
    scratch: Vec<f64>,
}

impl BlockSampler {
    /// Sum of support sizes over (state, time) from the last draw.
    pub fn total_support(&self) -> usize {
        self.caps.iter().sum()
    }

    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            phi: vec![0.0; n * m],
            caps: vec![0; n * m],
            emit: vec![0.0; n * m],
            bstar: vec![0.0; (n + 1) * m],
            b: vec![0.0; (n + 1) * m],
            ln_scale: vec![0.0; n],
            inv_int: (0..=n + 1).map(|d| 1.0 / d.max(1) as f64).collect(),
            ln_int: (0..=n + 1).map(|d| (d.max(1) as f64).ln()).collect(),
            scratch: Vec::with_capacity(n.max(m)),
        }
    }

    fn prepare(
        &mut self,
        params: &ModelParams,
        data: &Dataset,
        features: &FeatureTable,
    ) -> Result<usize> {
        let (n, m) = (self.n, self.m);
        if data.len() != n || params.num_states() != m {
            return Err(HsmmError::Precondition(format!(
                "block sampler sized for n={n}, M={m} but got n={}, M={}",
                data.len(),
                params.num_states()
            )));
        }
        if features.len() != n {
            return Err(HsmmError::Precondition(
                "feature table does not match the series length".into(),
            ));
        }
        params.check_data(data)?;
        let link = params.durations.link;
        let mut clamped = 0;
        for j in 0..m {
            let beta = params.durations.row(j);
            for t in 0..n {
                let rate = features.rate(beta, t, link);
                clamped += usize::from(rate.clamped);
                self.phi[j * n + t] = rate.value;
            }
        }
        let half_logs: Vec<f64> = (0..m)
            .map(|j| 0.5 * (2.0 * PI * params.emission.variance(j)).ln())
            .collect();
        let inv2s: Vec<f64> = (0..m)
            .map(|j| 0.5 / params.emission.variance(j))
            .collect();
        let mut ln_f = vec![0.0; m];
        for (t, &y) in data.y().iter().enumerate() {
            let mut top = f64::NEG_INFINITY;
            for j in 0..m {
                let d = y - params.emission.mean(j);
                ln_f[j] = -half_logs[j] - d * d * inv2s[j];
                top = top.max(ln_f[j]);
            }
            if !top.is_finite() {
                return Err(HsmmError::Underflow(format!(
                    "observation {t} has zero density under every state"
                )));
            }
            for j in 0..m {
                self.emit[j * n + t] = (ln_f[j] - top).exp();
            }
            self.ln_scale[t] = top;
        }
        Ok(clamped)
    }

    /// Fills the scaled messages and support caps. Returns the truncation warning count.
    fn backward(&mut self, params: &ModelParams, opts: BlockOptions) -> Result<usize> {
        let (n, m) = (self.n, self.m);
        let stride = n + 1;
        let global_cap = opts.duration_cap.unwrap_or(n).clamp(1, n.max(1));
        let target = 1.0 - opts.support_tail;
        let probs: Vec<f64> = (0..m * m)
            .map(|i| params.transitions.prob(i / m, i % m))
            .collect();
        let mut warnings = 0;
        for j in 0..m {
            self.b[j * stride + n] = 1.0;
        }
        let mut raw = vec![0.0; m];
        for t in (0..n).rev() {
            let remaining = n - t;
            let limit = global_cap.min(remaining);
            for (j, slot) in raw.iter_mut().enumerate() {
                let phi = self.phi[j * n + t];
                let (cap, start, first_mass, reached) =
                    support(phi, limit, target, &self.inv_int, &self.ln_int);
                if !reached && cap == global_cap && global_cap < remaining {
                    warnings += 1;
                }
                self.caps[j * n + t] = cap;
                let emit = &self.emit[j * n + t..j * n + t + cap];
                let b = &self.b[j * stride + t + 1..j * stride + t + cap + 1];
                let mut prod = 1.0;
                for &e in &emit[..start - 1] {
                    prod *= e;
                }
                let mut mass = first_mass;
                let mut sum = 0.0;
                let inv = &self.inv_int[start + 1..];
                for ((&e, &bn), &inv_d) in emit[start - 1..].iter().zip(&b[start - 1..]).zip(inv) {
                    prod *= e;
                    if prod < PRODUCT_FLOOR {
                        break;
                    }
                    sum += mass * prod * bn;
                    mass *= phi * inv_d;
                }
                *slot = sum;
            }
            let z = raw.iter().copied().fold(0.0, f64::max);
            if !(z > 0.0 && z.is_finite()) {
                return Err(HsmmError::Underflow(format!(
                    "backward messages lost all mass at time {t}"
                )));
            }
            let inv_z = 1.0 / z;
            self.ln_scale[t] += z.ln();
            for j in 0..m {
                self.bstar[j * stride + t] = raw[j] * inv_z;
                self.emit[j * n + t] *= inv_z;
            }
            if t > 0 {
                for j in 0..m {
                    let mut acc = 0.0;
                    for k in 0..m {
                        if k != j {
                            acc += probs[j * m + k] * self.bstar[k * stride + t];
                        }
                    }
                    self.b[j * stride + t] = acc;
                }
            }
        }
        Ok(warnings)
    }

    /// Draws `(S, τ)` from their joint conditional posterior.
    pub fn sample<R: Rng + ?Sized>(
        &mut self,
        params: &ModelParams,
        data: &Dataset,
        features: &FeatureTable,
        opts: BlockOptions,
        rng: &mut R,
    ) -> Result<BlockDraw> {
        let clamped_rates = self.prepare(params, data, features)?;
        let truncation_warnings = self.backward(params, opts)?;
        let (n, m) = (self.n, self.m);
        let stride = n + 1;

        self.scratch.clear();
        for j in 0..m {
            self.scratch
                .push(params.transitions.initial()[j] * self.bstar[j * stride]);
        }
        let total: f64 = self.scratch.iter().sum();
        let ln_evidence = total.ln() + self.ln_scale.iter().sum::<f64>();
        let underflow =
            || HsmmError::Underflow("forward sampling met an all-zero weight vector".into());
        let mut state = sample_categorical(&self.scratch, rng).ok_or_else(underflow)?;

        let mut segments = Vec::new();
        let mut t = 0;
        loop {
            let emit = &self.emit[state * n..(state + 1) * n];
            let b = &self.b[state * stride..(state + 1) * stride];
            let cap = self.caps[state * n + t];
            let phi = self.phi[state * n + t];
            let (_, start, first_mass, _) = support(phi, cap, 1.0, &self.inv_int, &self.ln_int);
            let mut prod = 1.0;
            let mut mass = first_mass;
            self.scratch.clear();
            for d in 1..=cap {
                prod *= emit[t + d - 1];
                if prod < PRODUCT_FLOOR {
                    prod = 0.0;
                }
                if d < start {
                    self.scratch.push(0.0);
                } else {
                    self.scratch.push(mass * prod * b[t + d]);
                    mass *= phi * self.inv_int[d + 1];
                }
            }
            let d = 1 + sample_categorical(&self.scratch, rng).ok_or_else(underflow)?;
            segments.push(Segment { state, duration: d });
            t += d;
            if t == n {
                break;
            }
            self.scratch.clear();
            for k in 0..m {
                self.scratch
                    .push(params.transitions.prob(state, k) * self.bstar[k * stride + t]);
            }
            state = sample_categorical(&self.scratch, rng).ok_or_else(underflow)?;
        }
        Ok(BlockDraw {
            seq: SegmentSequence::new(segments)?,
            truncation_warnings,
            clamped_rates,
            ln_evidence,
        })
    }
}

/// One block draw with freshly allocated buffers.
pub fn sample_states_durations<R: Rng + ?Sized>(
    params: &ModelParams,
    data: &Dataset,
    opts: BlockOptions,
    rng: &mut R,
) -> Result<BlockDraw> {
    let features = FeatureTable::new(data, params.durations.summary)?;
    BlockSampler::new(data.len(), params.num_states()).sample(params, data, &features, opts, rng)
}
