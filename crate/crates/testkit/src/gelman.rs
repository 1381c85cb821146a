//! Potential scale reduction factors from their textbook definitions.

use statrs::function::beta::beta_reg;

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (crate::mean(a), crate::mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0)
}

/// `P(F ≤ x)` for an F distribution through the regularized incomplete beta function.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    beta_reg(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))
}

/// F quantile by bisection.
pub fn f_quantile(p: f64, d1: f64, d2: f64) -> f64 {
    let mut hi = 1.0;
    while f_cdf(hi, d1, d2) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f_cdf(mid, d1, d2) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `(point, upper)` shrink factors of one scalar across chains, upper at the 97.5% quantile.
///
/// Point: `sqrt(df_adj * ((n-1)/n + (1+1/m) B / (n W)))` with `df_adj = (d+3)/(d+1)`;
/// the upper bound replaces the between term by its F-quantile-scaled version.
pub fn psrf(chains: &[Vec<f64>]) -> (f64, f64) {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| crate::mean(c)).collect();
    let vars: Vec<f64> = chains.iter().map(|c| crate::variance(c)).collect();
    let w = crate::mean(&vars);
    let b = n * crate::variance(&means);
    let grand = crate::mean(&means);
    let sq: Vec<f64> = means.iter().map(|x| x * x).collect();

    let var_w = crate::variance(&vars) / m;
    let var_b = 2.0 * b * b / (m - 1.0);
    let cov_wb = n / m * (cov(&vars, &sq) - 2.0 * grand * cov(&vars, &means));
    let v = (n - 1.0) / n * w + (1.0 + 1.0 / m) * b / n;
    let var_v = ((n - 1.0) * (n - 1.0) * var_w
        + (1.0 + 1.0 / m) * (1.0 + 1.0 / m) * var_b
        + 2.0 * (n - 1.0) * (1.0 + 1.0 / m) * cov_wb)
        / (n * n);
    let d = 2.0 * v * v / var_v;
    let adj = (d + 3.0) / (d + 1.0);

    let fixed = (n - 1.0) / n;
    let random = (1.0 + 1.0 / m) * b / (n * w);
    let q = f_quantile(0.975, m - 1.0, 2.0 * w * w / var_w);
    ((adj * (fixed + random)).sqrt(), (adj * (fixed + q * random)).sqrt())
}

fn invert(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let p = a.len();
    let mut inv: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for k in 0..p {
            a[col][k] /= d;
            inv[col][k] /= d;
        }
        for r in 0..p {
            if r != col {
                let f = a[r][col];
                for k in 0..p {
                    a[r][k] -= f * a[col][k];
                    inv[r][k] -= f * inv[col][k];
                }
            }
        }
    }
    inv
}

/// Multivariate shrink factor `(n-1)/n + (m+1)/m λ`, `λ` the top eigenvalue of `W⁻¹ B/n`.
///
/// `chains[c][i]` is the parameter vector of chain `c` at iteration `i`.
pub fn mpsrf(chains: &[Vec<Vec<f64>>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len();
    let p = chains[0][0].len();
    let column = |c: usize, k: usize| -> Vec<f64> { chains[c].iter().map(|r| r[k]).collect() };

    let mut w = vec![vec![0.0; p]; p];
    let mut bn = vec![vec![0.0; p]; p];
    let means: Vec<Vec<f64>> = (0..chains.len())
        .map(|c| (0..p).map(|k| crate::mean(&column(c, k))).collect())
        .collect();
    for a in 0..p {
        for b in 0..p {
            w[a][b] = (0..chains.len())
                .map(|c| cov(&column(c, a), &column(c, b)))
                .sum::<f64>()
                / m;
            let ma: Vec<f64> = means.iter().map(|v| v[a]).collect();
            let mb: Vec<f64> = means.iter().map(|v| v[b]).collect();
            bn[a][b] = cov(&ma, &mb);
        }
    }
    let winv = invert(w);
    let mat: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| (0..p).map(|k| winv[i][k] * bn[k][j]).sum()).collect())
        .collect();

    let mut v = vec![1.0; p];
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let next: Vec<f64> = (0..p).map(|i| (0..p).map(|j| mat[i][j] * v[j]).sum()).collect();
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        let dot: f64 = next.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()
            / v.iter().map(|x| x * x).sum::<f64>();
        v = next.iter().map(|x| x / norm).collect();
        if (dot - lambda).abs() <= 1e-15 * dot.abs() {
            lambda = dot;
            break;
        }
        lambda = dot;
    }
    (n as f64 - 1.0) / n as f64 + (m + 1.0) / m * lambda
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_quantile_of_symmetric_case() {
        // F(d, d) has median 1.
        assert!((f_quantile(0.5, 7.0, 7.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_of_small_matrix() {
        let inv = invert(vec![vec![4.0, 7.0], vec![2.0, 6.0]]);
        assert!((inv[0][0] - 0.6).abs() < 1e-14 && (inv[1][0] + 0.2).abs() < 1e-14);
    }
}
