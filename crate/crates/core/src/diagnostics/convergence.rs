//! Between/within-chain convergence diagnostics.
//!
//! The univariate factor follows the corrected-scale estimator with a
//! degrees-of-freedom adjustment and an F-based upper bound. The multivariate
//! factor is `(n-1)/n + (m+1)/m · λ_max(W⁻¹B/n)`.

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::error::{HsmmError, Result};

/// Parallel chains of equal length over the same parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet {
    /// `chains[c][i][k]`: chain `c`, iteration `i`, parameter `k`.
    chains: Vec<Vec<Vec<f64>>>,
    p: usize,
}

impl ChainSet {
    pub fn new(chains: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if chains.len() < 2 {
            return Err(HsmmError::Precondition(format!(
                "at least two chains are needed, got {}",
                chains.len()
            )));
        }
        let n = chains[0].len();
        if n == 0 {
            return Err(HsmmError::Precondition("chains are empty".into()));
        }
        let p = chains[0][0].len();
        for (c, chain) in chains.iter().enumerate() {
            if chain.len() != n {
                return Err(HsmmError::Precondition(format!(
                    "chain {c} has {} iterations, expected {n}",
                    chain.len()
                )));
            }
            if let Some(row) = chain.iter().find(|row| row.len() != p) {
                return Err(HsmmError::Precondition(format!(
                    "chain {c} has a row with {} parameters, expected {p}",
                    row.len()
                )));
            }
        }
        Ok(Self { chains, p })
    }

    /// Chains of a single scalar parameter.
    pub fn univariate(chains: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            chains
                .into_iter()
                .map(|c| c.into_iter().map(|v| vec![v]).collect())
                .collect(),
        )
    }

    pub fn num_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn num_iterations(&self) -> usize {
        self.chains[0].len()
    }

    pub fn num_params(&self) -> usize {
        self.p
    }

    /// Keeps only the listed parameter columns.
    pub fn select(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&c) = columns.iter().find(|&&c| c >= self.p) {
            return Err(HsmmError::Precondition(format!("no parameter column {c}")));
        }
        Self::new(
            self.chains
                .iter()
                .map(|chain| {
                    chain
                        .iter()
                        .map(|row| columns.iter().map(|&c| row[c]).collect())
                        .collect()
                })
                .collect(),
        )
    }

    fn column(&self, chain: usize, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.chains[chain].iter().map(move |row| row[k])
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0)
}

/// Quantile refined by bisection on the CDF around the library inverse, which
/// loses digits when the denominator degrees of freedom are large.
fn polished_quantile<D: ContinuousCDF<f64, f64>>(dist: &D, p: f64) -> f64 {
    let q = dist.inverse_cdf(p);
    if !(q.is_finite() && q > 0.0) {
        return q;
    }
    let mut width = q * 1e-6;
    let (mut lo, mut hi) = (q - width, q + width);
    while dist.cdf(lo) > p && lo > 0.0 {
        width *= 2.0;
        lo = (q - width).max(0.0);
    }
    while dist.cdf(hi) < p {
        width *= 2.0;
        hi = q + width;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if dist.cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Univariate potential scale reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psrf {
    /// Degrees-of-freedom corrected point estimate.
    pub point: f64,
    /// Upper confidence bound at the requested level.
    pub upper: f64,
    /// `sqrt(V̂ / W)` without the degrees-of-freedom correction.
    pub uncorrected: f64,
}

/// Potential scale reduction of parameter `k` with a 97.5% upper bound.
pub fn psrf(chains: &ChainSet, k: usize) -> Result<Psrf> {
    psrf_at(chains, k, 0.95)
}

/// As [`psrf`], with the upper bound at `(1 + confidence) / 2`.
pub fn psrf_at(chains: &ChainSet, k: usize, confidence: f64) -> Result<Psrf> {
    if k >= chains.num_params() {
        return Err(HsmmError::Precondition(format!("no parameter column {k}")));
    }
    let n = chains.num_iterations();
    if n < 10 {
        return Err(HsmmError::Precondition(format!(
            "at least 10 iterations are needed, got {n}"
        )));
    }
    let m = chains.num_chains();
    let (nf, mf) = (n as f64, m as f64);
    let mut s2 = Vec::with_capacity(m);
    let mut xbar = Vec::with_capacity(m);
    for c in 0..m {
        let col: Vec<f64> = chains.column(c, k).collect();
        let mu = mean(&col);
        xbar.push(mu);
        s2.push(col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (nf - 1.0));
    }
    let w = mean(&s2);
    if !(w > 0.0) {
        return Err(HsmmError::DegenerateChain(format!(
            "parameter {k} has zero within-chain variance"
        )));
    }
    let b = nf * covariance(&xbar, &xbar);
    let muhat = mean(&xbar);
    let var_w = covariance(&s2, &s2) / mf;
    let var_b = 2.0 * b * b / (mf - 1.0);
    let xbar2: Vec<f64> = xbar.iter().map(|x| x * x).collect();
    let cov_wb = (nf / mf) * (covariance(&s2, &xbar2) - 2.0 * muhat * covariance(&s2, &xbar));
    let v = (nf - 1.0) / nf * w + (1.0 + 1.0 / mf) * b / nf;
    let var_v = ((nf - 1.0).powi(2) * var_w
        + (1.0 + 1.0 / mf).powi(2) * var_b
        + 2.0 * (nf - 1.0) * (1.0 + 1.0 / mf) * cov_wb)
        / (nf * nf);
    let df_adj = if var_v > 0.0 {
        let df_v = 2.0 * v * v / var_v;
        (df_v + 3.0) / (df_v + 1.0)
    } else {
        1.0
    };
    let r2_fixed = (nf - 1.0) / nf;
    let r2_random = (1.0 + 1.0 / mf) * (b / nf) / w;
    let estimate = r2_fixed + r2_random;
    let upper = if r2_random > 0.0 {
        let p = (1.0 + confidence) / 2.0;
        let b_df = mf - 1.0;
        let q = if var_w > 0.0 {
            let w_df = 2.0 * w * w / var_w;
            let f = FisherSnedecor::new(b_df, w_df).map_err(|e| HsmmError::Domain(e.to_string()))?;
            polished_quantile(&f, p)
        } else {
            ChiSquared::new(b_df)
                .map_err(|e| HsmmError::Domain(e.to_string()))?
                .inverse_cdf(p)
                / b_df
        };
        r2_fixed + q * r2_random
    } else {
        r2_fixed
    };
    Ok(Psrf {
        point: (df_adj * estimate).sqrt(),
        upper: (df_adj * upper).sqrt(),
        uncorrected: estimate.sqrt(),
    })
}

/// Multivariate potential scale reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mpsrf {
    pub value: f64,
    /// The pooled within-chain covariance was singular and a pseudo-inverse was used.
    pub pseudo_inverse: bool,
}

/// Pooled within-chain covariance `W` and between-chain covariance of the means `B/n`.
pub fn within_between(chains: &ChainSet) -> (DMatrix<f64>, DMatrix<f64>) {
    let (m, n, p) = (chains.num_chains(), chains.num_iterations(), chains.num_params());
    let mut w = DMatrix::<f64>::zeros(p, p);
    let mut means = DMatrix::<f64>::zeros(m, p);
    for (c, chain) in chains.chains.iter().enumerate() {
        for row in chain {
            for k in 0..p {
                means[(c, k)] += row[k];
            }
        }
        for k in 0..p {
            means[(c, k)] /= n as f64;
        }
        for row in chain {
            for a in 0..p {
                let da = row[a] - means[(c, a)];
                for b in 0..=a {
                    w[(a, b)] += da * (row[b] - means[(c, b)]);
                }
            }
        }
    }
    let scale = 1.0 / (m as f64 * (n as f64 - 1.0));
    for a in 0..p {
        for b in 0..=a {
            w[(a, b)] *= scale;
            w[(b, a)] = w[(a, b)];
        }
    }
    let grand: Vec<f64> = (0..p).map(|k| means.column(k).mean()).collect();
    let mut bn = DMatrix::<f64>::zeros(p, p);
    for c in 0..m {
        for a in 0..p {
            for b in 0..p {
                bn[(a, b)] += (means[(c, a)] - grand[a]) * (means[(c, b)] - grand[b]);
            }
        }
    }
    bn /= m as f64 - 1.0;
    (w, bn)
}

fn largest_eigenvalue(s: DMatrix<f64>) -> f64 {
    let sym = (&s + s.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Multivariate potential scale reduction over every parameter of `chains`.
pub fn mpsrf(chains: &ChainSet) -> Result<Mpsrf> {
    let (m, n) = (chains.num_chains() as f64, chains.num_iterations() as f64);
    if chains.num_params() == 0 {
        return Err(HsmmError::Precondition("no parameters to diagnose".into()));
    }
    let (w, bn) = within_between(chains);
    let scale = w.diagonal().amax();
    let well_conditioned = |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| {
        c.l_dirty().diagonal().iter().all(|d| d * d > scale * 1e-12)
    };
    let (lambda, pseudo) = match w.clone().cholesky().filter(well_conditioned) {
        Some(chol) => {
            let l = chol.l();
            let linv = l
                .solve_lower_triangular(&DMatrix::identity(l.nrows(), l.nrows()))
                .ok_or_else(|| HsmmError::Domain("triangular solve failed".into()))?;
            (largest_eigenvalue(&linv * &bn * linv.transpose()), false)
        }
        None => {
            let eig = SymmetricEigen::new(w.clone());
            let tol = eig.eigenvalues.amax() * w.nrows() as f64 * f64::EPSILON;
            if !(tol > 0.0) {
                return Err(HsmmError::DegenerateChain(
                    "every parameter has zero within-chain variance".into(),
                ));
            }
            let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| {
                if e > tol {
                    1.0 / e.sqrt()
                } else {
                    0.0
                }
            }));
            let root = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
            (largest_eigenvalue(&root * &bn * &root), true)
        }
    };
    Ok(Mpsrf {
        value: (n - 1.0) / n + (m + 1.0) / m * lambda,
        pseudo_inverse: pseudo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn f_quantile_matches_closed_form_at_two_numerator_df() {
        // With d1 = 2 the CDF is 1 - (1 + 2x/d2)^(-d2/2).
        for d2 in [4.0, 37.5, 900.0, 22_215.0, 1e6] {
            let exact = d2 / 2.0 * (0.025f64.powf(-2.0 / d2) - 1.0);
            let q = polished_quantile(&FisherSnedecor::new(2.0, d2).unwrap(), 0.975);
            assert!((q - exact).abs() < 1e-9 * exact, "d2 {d2}: {q} vs {exact}");
        }
    }

    fn normal_chains(m: usize, n: usize, offsets: &[f64], seed: u64) -> ChainSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ChainSet::univariate(
            (0..m)
                .map(|c| {
                    (0..n)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            offsets[c] + z
                        })
                        .collect()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_chains_give_the_closed_form() {
        let chain: Vec<f64> = (0..50).map(|i| (i as f64 * 0.7).sin()).collect();
        let set = ChainSet::univariate(vec![chain.clone(), chain]).unwrap();
        let r = psrf(&set, 0).unwrap();
        let expected = (49.0f64 / 50.0).sqrt();
        assert!((r.point - expected).abs() < 1e-14);
        assert!((r.upper - expected).abs() < 1e-14);
        assert!((mpsrf(&set).unwrap().value - 49.0 / 50.0).abs() < 1e-12);
    }

    #[test]
    fn iid_chains_are_near_one() {
        let r = psrf(&normal_chains(4, 10_000, &[0.0; 4], 1), 0).unwrap();
        assert!((0.99..=1.01).contains(&r.point), "{r:?}");
        assert!(r.upper >= r.point);
    }

    #[test]
    fn separated_chains_are_flagged() {
        let r = psrf(&normal_chains(2, 500, &[0.0, 10.0], 2), 0).unwrap();
        assert!(r.point > 2.0);
    }

    #[test]
    fn zero_variance_is_degenerate() {
        let set = ChainSet::univariate(vec![vec![1.0; 20], vec![1.0; 20]]).unwrap();
        assert!(matches!(psrf(&set, 0), Err(HsmmError::DegenerateChain(_))));
    }

    #[test]
    fn singular_within_covariance_uses_pseudo_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let chains = (0..3)
            .map(|_| {
                (0..200)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        vec![z, 2.0 * z]
                    })
                    .collect()
            })
            .collect();
        let out = mpsrf(&ChainSet::new(chains).unwrap()).unwrap();
        assert!(out.pseudo_inverse);
        assert!(out.value.is_finite());
    }

    #[test]
    fn shape_errors() {
        assert!(ChainSet::univariate(vec![vec![1.0; 5]]).is_err());
        assert!(ChainSet::univariate(vec![vec![1.0; 5], vec![1.0; 4]]).is_err());
        let short = ChainSet::univariate(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(psrf(&short, 0).is_err());
    }
}
