//! Exhaustive posterior over segmentations of a short series.

use crate::{log_sum_exp, normal_ln_pdf, ztp_ln_pmf};

/// A small model and series, with an exponential duration link and last-value covariates.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub y: Vec<f64>,
    /// One row per observation; may have zero columns.
    pub covariates: Vec<Vec<f64>>,
    /// Covariates used by the segment that starts at time zero.
    pub x0: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub initial: Vec<f64>,
    pub transitions: Vec<Vec<f64>>,
    /// Per state: intercept followed by slopes.
    pub beta: Vec<Vec<f64>>,
}

/// Every sequence of `(state, duration)` pairs covering `n` steps with no repeated neighbors.
pub fn segmentations(n: usize, m: usize) -> Vec<Vec<(usize, usize)>> {
    fn extend(rest: usize, m: usize, prefix: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if rest == 0 {
            out.push(prefix.clone());
            return;
        }
        for s in 0..m {
            if prefix.last().is_some_and(|&(p, _)| p == s) {
                continue;
            }
            for d in 1..=rest {
                prefix.push((s, d));
                extend(rest - d, m, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    extend(n, m, &mut Vec::new(), &mut out);
    out
}

impl Fixture {
    pub fn num_states(&self) -> usize {
        self.means.len()
    }

    /// Duration rate of a segment of `state` starting at `t`.
    pub fn rate(&self, state: usize, t: usize) -> f64 {
        let x = if t == 0 { &self.x0 } else { &self.covariates[t - 1] };
        let b = &self.beta[state];
        (b[0] + b[1..].iter().zip(x).map(|(c, v)| c * v).sum::<f64>()).exp()
    }

    /// Log of the joint density of data, states and durations.
    pub fn ln_joint(&self, segs: &[(usize, usize)]) -> f64 {
        let mut total = self.initial[segs[0].0].ln();
        let mut t = 0;
        for (q, &(s, d)) in segs.iter().enumerate() {
            if q > 0 {
                total += self.transitions[segs[q - 1].0][s].ln();
            }
            total += ztp_ln_pmf(d as u64, self.rate(s, t));
            for i in t..t + d {
                total += normal_ln_pdf(self.y[i], self.means[s], self.variances[s]);
            }
            t += d;
        }
        total
    }

    /// Every segmentation with its normalized posterior probability.
    pub fn posterior(&self) -> Vec<(Vec<(usize, usize)>, f64)> {
        let all = segmentations(self.y.len(), self.num_states());
        let ln_w: Vec<f64> = all.iter().map(|s| self.ln_joint(s)).collect();
        let z = log_sum_exp(&ln_w);
        all.into_iter()
            .zip(ln_w)
            .map(|(s, w)| (s, (w - z).exp()))
            .collect()
    }

    /// `ln p(y)` with states and durations summed out.
    pub fn ln_evidence(&self) -> f64 {
        let all = segmentations(self.y.len(), self.num_states());
        let ln_w: Vec<f64> = all.iter().map(|s| self.ln_joint(s)).collect();
        log_sum_exp(&ln_w)
    }

    /// `marginals[t][j] = P(state at t is j | y)`.
    pub fn state_marginals(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.num_states()]; self.y.len()];
        for (segs, p) in self.posterior() {
            let mut t = 0;
            for (s, d) in segs {
                for row in &mut out[t..t + d] {
                    row[s] += p;
                }
                t += d;
            }
        }
        out
    }
}

/// Largest per-time total-variation distance between two marginal tables.
pub fn max_marginal_tv(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| 0.5 * ra.iter().zip(rb).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_compositions() {
        // Two states: each composition of n into k parts has two alternating labelings.
        assert_eq!(segmentations(4, 2).len(), 2 * 8);
        assert_eq!(segmentations(1, 3).len(), 3);
        // Three states, n = 2: three single segments plus 3 * 2 two-segment paths.
        assert_eq!(segmentations(2, 3).len(), 9);
    }
}
