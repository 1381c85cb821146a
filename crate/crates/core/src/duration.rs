//! Covariate-dependent duration rate `φ = g(β_0 + Σ_i β_i f_i(X_{1:T}))`.
//!
//! A segment that starts at (zero-based) time `s > 0` sees covariate rows
//! `0..s`, i.e. everything observed up to the preceding transition. The first
//! segment sees the initial row `x0`.

use serde::{Deserialize, Serialize};

use crate::error::{HsmmError, Result};
use crate::model::Dataset;

/// Upper clamp on the duration rate, `e^30`.
pub const RATE_CEILING: f64 = 10_686_474_581_524.463;
/// Lower clamp on the duration rate, `e^-30`.
pub const RATE_FLOOR: f64 = 9.357_622_968_840_175e-14;

/// Reduction of the covariate history to one value per covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateSummary {
    /// The most recent row before the segment starts.
    #[default]
    LastValue,
    /// Mean of the last `window` rows before the segment starts.
    TrailingMean { window: usize },
}

impl CovariateSummary {
    pub fn validate(&self) -> Result<()> {
        match self {
            CovariateSummary::TrailingMean { window: 0 } => Err(HsmmError::config(
                "summary.window",
                "trailing window must contain at least one row",
            )),
            _ => Ok(()),
        }
    }

    /// Rows of history the summary reads.
    pub fn rows_needed(&self) -> usize {
        match *self {
            CovariateSummary::LastValue => 1,
            CovariateSummary::TrailingMean { window } => window,
        }
    }

    /// Summarizes `history` (oldest first). Falls back to `x0` when the history is empty.
    pub fn summarize(&self, history: &[&[f64]], x0: Option<&[f64]>) -> Result<Vec<f64>> {
        if history.is_empty() {
            return x0.map(<[f64]>::to_vec).ok_or_else(|| {
                HsmmError::Precondition(
                    "empty covariate history and no initial covariate row".into(),
                )
            });
        }
        match *self {
            CovariateSummary::LastValue => Ok(history[history.len() - 1].to_vec()),
            CovariateSummary::TrailingMean { window } => {
                self.validate()?;
                let tail = &history[history.len().saturating_sub(window)..];
                let r = tail[0].len();
                let mut out = vec![0.0; r];
                for row in tail {
                    for (o, v) in out.iter_mut().zip(row.iter()) {
                        *o += v;
                    }
                }
                let k = tail.len() as f64;
                out.iter_mut().for_each(|o| *o /= k);
                Ok(out)
            }
        }
    }
}

/// Positive link `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Exp,
    /// `ln(1 + e^η)`.
    Softplus,
}

impl Link {
    fn apply(&self, eta: f64) -> f64 {
        match self {
            Link::Exp => eta.exp(),
            Link::Softplus => {
                if eta > 30.0 {
                    eta
                } else {
                    eta.exp().ln_1p()
                }
            }
        }
    }
}

/// An evaluated duration rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate {
    pub value: f64,
    /// Set when the raw value fell outside `[RATE_FLOOR, RATE_CEILING]`.
    pub clamped: bool,
}

/// `g(β · [1, features])`, clamped to `[RATE_FLOOR, RATE_CEILING]`.
pub fn rate_from_features(beta_row: &[f64], features: &[f64], link: Link) -> Rate {
    debug_assert_eq!(beta_row.len(), features.len() + 1);
    let eta = beta_row[0]
        + beta_row[1..]
            .iter()
            .zip(features)
            .map(|(b, x)| b * x)
            .sum::<f64>();
    let raw = link.apply(eta);
    if raw.is_nan() {
        Rate {
            value: RATE_CEILING,
            clamped: true,
        }
    } else if raw > RATE_CEILING {
        Rate {
            value: RATE_CEILING,
            clamped: true,
        }
    } else if raw < RATE_FLOOR {
        Rate {
            value: RATE_FLOOR,
            clamped: true,
        }
    } else {
        Rate {
            value: raw,
            clamped: false,
        }
    }
}

/// Duration rate of a segment from its covariate history.
///
/// `history` holds the covariate rows observed before the segment, oldest first;
/// `x0` is used when it is empty (the first segment).
pub fn duration_rate(
    beta_row: &[f64],
    history: &[&[f64]],
    x0: Option<&[f64]>,
    summary: CovariateSummary,
    link: Link,
) -> Result<Rate> {
    if beta_row.iter().any(|b| !b.is_finite()) {
        return Err(HsmmError::Domain("non-finite duration coefficient".into()));
    }
    let features = summary.summarize(history, x0)?;
    if features.len() + 1 != beta_row.len() {
        return Err(HsmmError::InvalidParams(format!(
            "{} coefficients for {} covariates",
            beta_row.len(),
            features.len()
        )));
    }
    Ok(rate_from_features(beta_row, &features, link))
}

/// Summarized covariates for every possible segment start `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    r: usize,
    n: usize,
    values: Vec<f64>,
}

impl FeatureTable {
    pub fn new(data: &Dataset, summary: CovariateSummary) -> Result<Self> {
        summary.validate()?;
        let n = data.len();
        let r = data.num_covariates();
        let mut values = Vec::with_capacity(n * r);
        values.extend_from_slice(data.x0());
        match summary {
            CovariateSummary::LastValue => {
                for s in 1..n {
                    values.extend_from_slice(data.covariate_row(s - 1));
                }
            }
            CovariateSummary::TrailingMean { window } => {
                // prefix[t] = sum of rows 0..t
                let mut prefix = vec![0.0; (n + 1) * r];
                for t in 0..n {
                    for i in 0..r {
                        prefix[(t + 1) * r + i] = prefix[t * r + i] + data.covariate_row(t)[i];
                    }
                }
                for s in 1..n {
                    let lo = s.saturating_sub(window);
                    let k = (s - lo) as f64;
                    for i in 0..r {
                        values.push((prefix[s * r + i] - prefix[lo * r + i]) / k);
                    }
                }
            }
        }
        Ok(Self { r, n, values })
    }

    pub fn num_covariates(&self) -> usize {
        self.r
    }

    /// Number of segment starts covered.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Features seen by a segment starting at `start`.
    pub fn at(&self, start: usize) -> &[f64] {
        &self.values[start * self.r..(start + 1) * self.r]
    }

    pub fn rate(&self, beta_row: &[f64], start: usize, link: Link) -> Rate {
        rate_from_features(beta_row, self.at(start), link)
    }
}
