//! Monte Carlo coverage study of the emission means under subsampling, and
//! the rate recommendation built on its reference tables.
//!
//! Each replicate simulates one series per (ψ, n) column, then for every rate
//! runs the emission-only sampler with states fixed at the truth and checks
//! whether each state's interval for `μ_j` contains the true value.

use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::credible_interval;
use crate::error::{HsmmError, Result};
use crate::model::{Dataset, EmissionParams, SegmentSequence, TransitionMatrix};
use crate::rng::derive_rng;
use crate::sampler::config::{validate_rate, Priors};
use crate::sampler::gibbs::{subsample_indices, update_means, update_variances};
use crate::sampler::init::grouped_moments;
use crate::simulator::{simulate, SimSpec};

/// True parameters shared by every scenario of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthSpec {
    /// Distance between neighbouring state means, in emission standard deviations.
    pub mean_spacing_sd: f64,
    pub variance: f64,
    /// Constant duration rate of every state.
    pub phi: f64,
}

impl Default for TruthSpec {
    fn default() -> Self {
        Self {
            mean_spacing_sd: 3.0,
            variance: 1.0,
            phi: 30.0,
        }
    }
}

impl TruthSpec {
    /// Means evenly spaced and centred on zero.
    pub fn means(&self, m: usize) -> Vec<f64> {
        let step = self.mean_spacing_sd * self.variance.sqrt();
        let centre = (m as f64 - 1.0) / 2.0;
        (0..m).map(|j| (j as f64 - centre) * step).collect()
    }
}

/// Configuration of a coverage study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub num_states: usize,
    pub psis: Vec<f64>,
    pub sizes: Vec<usize>,
    pub replicates: usize,
    /// Subsampling rates, descending.
    pub rates: Vec<f64>,
    /// Credible level of the intervals.
    pub level: f64,
    pub truth: TruthSpec,
    /// Saved emission-only iterations per fit.
    pub iterations: usize,
    /// Discarded leading iterations per fit.
    pub warmup: usize,
    pub priors: Priors,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            num_states: 3,
            psis: vec![0.25, 0.5, 0.75],
            sizes: vec![2500, 5000],
            replicates: 100,
            rates: (1..=10).rev().map(|k| k as f64 / 10.0).collect(),
            level: 0.9,
            truth: TruthSpec::default(),
            iterations: 2000,
            warmup: 200,
            priors: Priors::default(),
            seed: 1,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_states < 2 {
            return Err(HsmmError::config("num_states", "must be at least 2"));
        }
        if self.replicates == 0 {
            return Err(HsmmError::config("replicates", "must be at least 1"));
        }
        if self.rates.is_empty() {
            return Err(HsmmError::config("rates", "must not be empty"));
        }
        for r in &self.rates {
            validate_rate(*r).map_err(|_| HsmmError::config("rates", format!("{r} is not in (0, 1]")))?;
        }
        if self.rates.windows(2).any(|w| w[0] <= w[1]) {
            return Err(HsmmError::config("rates", "must be strictly descending"));
        }
        if self.psis.is_empty() || self.psis.iter().any(|p| !(p.abs() < 1.0)) {
            return Err(HsmmError::config("psis", "need at least one value, each with |psi| < 1"));
        }
        if self.sizes.is_empty() || self.sizes.iter().any(|&n| n < self.num_states) {
            return Err(HsmmError::config("sizes", "need at least one size, each >= num_states"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(HsmmError::config("level", "must lie in (0, 1)"));
        }
        if self.iterations < 2 {
            return Err(HsmmError::config("iterations", "must be at least 2"));
        }
        if !(self.truth.variance > 0.0 && self.truth.phi > 0.0 && self.truth.mean_spacing_sd.is_finite()) {
            return Err(HsmmError::config("truth", "variance and phi must be positive"));
        }
        self.priors.validate()
    }

    /// Columns of the table in order: every size, and within it every ψ.
    pub fn columns(&self) -> Vec<(f64, usize)> {
        self.sizes
            .iter()
            .flat_map(|&n| self.psis.iter().map(move |&p| (p, n)))
            .collect()
    }

    /// Simulation spec of one column.
    pub fn sim_spec(&self, psi: f64, n: usize) -> Result<SimSpec> {
        let m = self.num_states;
        SimSpec::constant_rates(
            EmissionParams::new(self.truth.means(m), vec![self.truth.variance; m])?,
            TransitionMatrix::uniform(m)?,
            &vec![self.truth.phi; m],
            psi,
            n,
        )
    }
}

/// Emission-only Gibbs run with fixed states; returns `μ` draws per state after warm-up.
///
/// Starts from the per-state sample variances; each sweep draws a fresh
/// subsample, then `μ` and `σ²`.
#[allow(clippy::too_many_arguments)]
pub fn emission_only_fit<R: Rng + ?Sized>(
    data: &Dataset,
    states: &SegmentSequence,
    m: usize,
    rate: f64,
    iterations: usize,
    warmup: usize,
    priors: &Priors,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let y = data.y();
    let labels = states.to_states();
    let start = grouped_moments(y, states, m)?;
    let mut variances = start.variances().to_vec();
    let mut draws = vec![Vec::with_capacity(iterations); m];
    for it in 0..warmup + iterations {
        let sub = subsample_indices(y.len(), rate, rng)?;
        let means = update_means(y, &labels, &sub, &variances, priors, rng);
        variances = update_variances(y, &labels, &sub, &means, priors, rng);
        if it >= warmup {
            for (d, &mu) in draws.iter_mut().zip(&means) {
                d.push(mu);
            }
        }
    }
    Ok(draws)
}

/// Coverage percentages: rows are rates, columns are (ψ, n) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub rates: Vec<f64>,
    pub columns: Vec<(f64, usize)>,
    /// `cells[rate][column]`, in percent.
    pub cells: Vec<Vec<f64>>,
    /// Replicates that entered each column.
    pub replicates: Vec<usize>,
    /// Replicates that failed per column, with their messages.
    pub failures: Vec<Vec<String>>,
}

impl CoverageTable {
    pub fn cell(&self, rate: f64, psi: f64, n: usize) -> Option<f64> {
        let r = self.rates.iter().position(|&x| (x - rate).abs() < 1e-9)?;
        let c = self
            .columns
            .iter()
            .position(|&(p, k)| (p - psi).abs() < 1e-9 && k == n)?;
        Some(self.cells[r][c])
    }

    /// Coverage down one column, in rate order.
    pub fn column(&self, psi: f64, n: usize) -> Option<Vec<f64>> {
        let c = self
            .columns
            .iter()
            .position(|&(p, k)| (p - psi).abs() < 1e-9 && k == n)?;
        Some(self.cells.iter().map(|row| row[c]).collect())
    }

    pub fn total_failures(&self) -> usize {
        self.failures.iter().map(Vec::len).sum()
    }

    /// `rate_pct,psi_<ψ>_n_<n>,...` with one row per rate.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header = vec!["rate_pct".to_string()];
        header.extend(self.columns.iter().map(|(p, n)| format!("psi_{p}_n_{n}")));
        writeln!(out, "{}", header.join(","))?;
        for (rate, row) in self.rates.iter().zip(&self.cells) {
            let mut line = vec![format!("{}", (rate * 100.0).round())];
            line.extend(row.iter().map(|c| format!("{c}")));
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Hits per rate for one replicate of one column, summed over states.
fn replicate_hits(spec: &ScenarioSpec, col: usize, psi: f64, n: usize, rep: usize) -> Result<Vec<usize>> {
    let sim_spec = spec.sim_spec(psi, n)?;
    let mut rng = derive_rng(spec.seed, &[0, col as u64, rep as u64]);
    let sim = simulate(&sim_spec, &mut rng)?;
    let truth = spec.truth.means(spec.num_states);
    spec.rates
        .iter()
        .enumerate()
        .map(|(k, &rate)| {
            let mut rng = derive_rng(spec.seed, &[1, col as u64, rep as u64, k as u64]);
            let draws = emission_only_fit(
                &sim.data,
                &sim.truth,
                spec.num_states,
                rate,
                spec.iterations,
                spec.warmup,
                &spec.priors,
                &mut rng,
            )?;
            let mut hits = 0;
            for (d, &t) in draws.iter().zip(&truth) {
                let (lo, hi) = credible_interval(d, spec.level)?;
                hits += usize::from(lo <= t && t <= hi);
            }
            Ok(hits)
        })
        .collect()
}

/// Runs every (column, replicate, rate) cell. Work runs in parallel; the table
/// is assembled in a fixed order, so it depends only on `spec`.
pub fn run_coverage_study(spec: &ScenarioSpec) -> Result<CoverageTable> {
    spec.validate()?;
    let columns = spec.columns();
    let items: Vec<(usize, usize)> = (0..columns.len())
        .flat_map(|c| (0..spec.replicates).map(move |r| (c, r)))
        .collect();
    let results: Vec<Result<Vec<usize>>> = items
        .par_iter()
        .map(|&(c, r)| replicate_hits(spec, c, columns[c].0, columns[c].1, r))
        .collect();
    let mut hits = vec![vec![0usize; columns.len()]; spec.rates.len()];
    let mut used = vec![0usize; columns.len()];
    let mut failures = vec![Vec::new(); columns.len()];
    for (&(c, r), res) in items.iter().zip(results) {
        match res {
            Ok(h) => {
                used[c] += 1;
                for (k, v) in h.into_iter().enumerate() {
                    hits[k][c] += v;
                }
            }
            Err(e) => failures[c].push(format!("replicate {r}: {e}")),
        }
    }
    let m = spec.num_states as f64;
    let cells = hits
        .iter()
        .map(|row| {
            row.iter()
                .zip(&used)
                .map(|(&h, &u)| if u == 0 { f64::NAN } else { 100.0 * h as f64 / (m * u as f64) })
                .collect()
        })
        .collect();
    Ok(CoverageTable {
        rates: spec.rates.clone(),
        columns,
        cells,
        replicates: used,
        failures,
    })
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties. `None` when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some(sab / (saa * sbb).sqrt())
    }
}

/// Lag-one sample autocorrelation.
pub fn lag1_acf(x: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let denom: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if denom == 0.0 {
        return None;
    }
    let num: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    Some(num / denom)
}

/// Mean lag-one autocorrelation over the complete contiguous blocks of `y` of length `block`.
pub fn block_lag1_acf(y: &[f64], block: usize) -> Option<f64> {
    if block < 2 {
        return None;
    }
    let values: Vec<f64> = y.chunks_exact(block).filter_map(lag1_acf).collect();
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Reference coverage of the emission means for one number of states.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    pub num_states: usize,
    pub psis: [f64; 3],
    pub sizes: [usize; 2],
    /// Descending, in percent.
    pub rates_pct: [u32; 10],
    /// `cells[rate][size * 3 + psi]`, in percent.
    pub cells: [[u32; 6]; 10],
}

const REF_PSIS: [f64; 3] = [0.25, 0.5, 0.75];
const REF_SIZES: [usize; 2] = [2500, 5000];
const REF_RATES: [u32; 10] = [100, 90, 80, 70, 60, 50, 40, 30, 20, 10];

/// Coverage reference for 2, 3 and 4 states.
pub fn reference_table(num_states: usize) -> Option<ReferenceTable> {
    let cells = match num_states {
        2 => [
            [78, 68, 44, 76, 68, 55],
            [83, 73, 50, 81, 74, 60],
            [87, 80, 54, 86, 76, 66],
            [92, 84, 62, 90, 81, 72],
            [96, 85, 67, 93, 84, 77],
            [98, 88, 70, 94, 88, 81],
            [98, 93, 76, 97, 94, 86],
            [100, 96, 88, 100, 98, 91],
            [100, 99, 92, 100, 100, 96],
            [100, 100, 100, 100, 100, 100],
        ],
        3 => [
            [77, 68, 50, 82, 67, 50],
            [82, 75, 56, 86, 73, 55],
            [89, 80, 60, 90, 76, 60],
            [92, 84, 65, 92, 81, 64],
            [96, 87, 71, 94, 86, 72],
            [99, 92, 79, 96, 92, 79],
            [99, 96, 84, 99, 96, 84],
            [100, 99, 90, 100, 98, 90],
            [100, 100, 95, 100, 100, 95],
            [100, 100, 100, 100, 100, 99],
        ],
        4 => [
            [80, 66, 52, 80, 67, 53],
            [86, 70, 57, 86, 72, 56],
            [89, 75, 61, 89, 78, 58],
            [94, 81, 66, 93, 83, 62],
            [96, 85, 69, 95, 86, 69],
            [98, 90, 75, 97, 90, 76],
            [100, 96, 82, 98, 95, 83],
            [100, 99, 87, 99, 98, 90],
            [100, 100, 94, 100, 100, 96],
            [100, 100, 99, 100, 100, 99],
        ],
        _ => return None,
    };
    Some(ReferenceTable {
        num_states,
        psis: REF_PSIS,
        sizes: REF_SIZES,
        rates_pct: REF_RATES,
        cells,
    })
}

/// Minimum tabulated coverage a recommended rate must reach.
pub const COVERAGE_TARGET: f64 = 88.0;

/// A recommended subsampling rate and how it was reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRecommendation {
    pub rate: f64,
    /// Autocorrelation used for the lookup.
    pub acf: f64,
    /// Table column the autocorrelation snapped to; 0 means no dependence.
    pub psi_column: f64,
    pub size_column: usize,
    /// Mean block autocorrelation per block size, if computed from data.
    pub acf_by_block: Vec<(usize, f64)>,
    pub warning: Option<String>,
}

/// Looks up the rate for a measured within-segment autocorrelation.
///
/// The autocorrelation snaps to the nearest of 0 and the table's ψ columns, the
/// size column nearest `n` is used, and the largest rate whose coverage is at
/// least [`COVERAGE_TARGET`] is returned. Values more than half a column
/// spacing beyond the table fall back to the smallest tabulated rate.
pub fn rate_for_acf(acf: f64, n: usize, table: &ReferenceTable) -> Result<RateRecommendation> {
    if !acf.is_finite() {
        return Err(HsmmError::Domain(format!("autocorrelation {acf} is not finite")));
    }
    let size_idx = if n.abs_diff(table.sizes[0]) <= n.abs_diff(table.sizes[1]) { 0 } else { 1 };
    let spacing = table.psis[1] - table.psis[0];
    let top = table.psis[2];
    let mut rec = RateRecommendation {
        rate: 1.0,
        acf,
        psi_column: 0.0,
        size_column: table.sizes[size_idx],
        acf_by_block: Vec::new(),
        warning: None,
    };
    if acf > top + spacing / 2.0 {
        rec.rate = f64::from(table.rates_pct[9]) / 100.0;
        rec.psi_column = top;
        rec.warning = Some(format!(
            "autocorrelation {acf:.3} lies above the reference table; using the smallest tabulated rate"
        ));
        return Ok(rec);
    }
    if acf < -spacing / 2.0 {
        rec.warning = Some(format!(
            "autocorrelation {acf:.3} is negative; no subsampling applied"
        ));
        return Ok(rec);
    }
    let mut best = (0.0f64, acf.abs());
    for &p in &table.psis {
        let d = (acf - p).abs();
        if d < best.1 {
            best = (p, d);
        }
    }
    rec.psi_column = best.0;
    if best.0 == 0.0 {
        return Ok(rec);
    }
    let col = size_idx * 3 + table.psis.iter().position(|&p| p == best.0).expect("table column");
    match (0..10).find(|&r| f64::from(table.cells[r][col]) >= COVERAGE_TARGET) {
        Some(r) => rec.rate = f64::from(table.rates_pct[r]) / 100.0,
        None => {
            rec.rate = f64::from(table.rates_pct[9]) / 100.0;
            rec.warning = Some("no tabulated rate reaches the coverage target".into());
        }
    }
    Ok(rec)
}

/// Measures the mean block autocorrelation of `y` over block sizes
/// `min_block..=max_block` (pilot mean segment durations), then looks up the rate.
pub fn recommend_rate(
    y: &[f64],
    min_block: usize,
    max_block: usize,
    num_states: usize,
) -> Result<RateRecommendation> {
    if min_block < 2 || max_block < min_block {
        return Err(HsmmError::Precondition(format!(
            "block range {min_block}..={max_block} must satisfy 2 <= min <= max"
        )));
    }
    let table = reference_table(num_states).ok_or_else(|| {
        HsmmError::Precondition(format!("no coverage reference for {num_states} states"))
    })?;
    let acf_by_block: Vec<(usize, f64)> = (min_block..=max_block)
        .filter_map(|b| block_lag1_acf(y, b).map(|a| (b, a)))
        .collect();
    if acf_by_block.is_empty() {
        return Err(HsmmError::Precondition(
            "series too short for the requested block sizes".into(),
        ));
    }
    let acf = acf_by_block.iter().map(|(_, a)| a).sum::<f64>() / acf_by_block.len() as f64;
    let mut rec = rate_for_acf(acf, y.len(), &table)?;
    rec.acf_by_block = acf_by_block;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_lookups() {
        let t3 = reference_table(3).unwrap();
        assert_eq!(rate_for_acf(0.75, 2500, &t3).unwrap().rate, 0.3);
        assert_eq!(rate_for_acf(0.25, 2500, &t3).unwrap().rate, 0.8);
        assert_eq!(rate_for_acf(0.01, 2500, &t3).unwrap().rate, 1.0);
        let high = rate_for_acf(0.95, 2500, &t3).unwrap();
        assert_eq!(high.rate, 0.1);
        assert!(high.warning.is_some());
        assert_eq!(rate_for_acf(0.72, 5232, &t3).unwrap().size_column, 5000);
        assert!(reference_table(5).is_none());
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 35.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), None);
        // Ties receive average ranks.
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((r - 0.948_683_298_050_513_8).abs() < 1e-12, "{r}");
    }

    #[test]
    fn block_acf_of_alternating_series() {
        let y: Vec<f64> = (0..40).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let a = block_lag1_acf(&y, 10).unwrap();
        assert!((a + 0.9).abs() < 1e-12, "{a}");
        assert!(block_lag1_acf(&y, 50).is_none());
    }

    #[test]
    fn spec_validation() {
        let mut s = ScenarioSpec::default();
        assert!(s.validate().is_ok());
        s.rates = vec![0.5, 1.0];
        assert!(s.validate().is_err());
        assert_eq!(TruthSpec::default().means(3), vec![-3.0, 0.0, 3.0]);
    }

    #[test]
    fn small_study_is_reproducible() {
        let spec = ScenarioSpec {
            psis: vec![0.5],
            sizes: vec![300],
            replicates: 3,
            rates: vec![1.0, 0.5],
            iterations: 200,
            warmup: 20,
            ..ScenarioSpec::default()
        };
        let a = run_coverage_study(&spec).unwrap();
        let b = run_coverage_study(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.replicates, vec![3]);
        assert!(a.cells.iter().flatten().all(|c| (0.0..=100.0).contains(c)));
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("rate_pct,psi_0.5_n_300\n100,"));
    }
}
