//! Rank tests and correlations.

use statrs::distribution::{ContinuousCDF, Normal};

use super::metrics::{midranks, u_statistic};
use crate::error::{Error, Result};

/// Largest pooled sample size handled by exact enumeration in
/// [`mann_whitney_one_sided`].
pub const EXACT_LIMIT: usize = 16;

fn check_samples(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("Mann-Whitney samples must be nonempty".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::invalid("Mann-Whitney samples contain NaN"));
    }
    Ok(())
}

/// One-sided Mann-Whitney U test of "`a` is stochastically greater than
/// `b`". Exact permutation distribution when `|a| + |b| ≤ 16`, otherwise the
/// normal approximation with tie and continuity corrections.
pub fn mann_whitney_one_sided(a: &[f64], b: &[f64]) -> Result<f64> {
    check_samples(a, b)?;
    if a.len() + b.len() <= EXACT_LIMIT {
        mann_whitney_exact(a, b)
    } else {
        mann_whitney_normal(a, b)
    }
}

/// Exact `P(U ≥ U_obs)` under the permutation null, conditional on the
/// observed ties: counts size-`|a|` subsets of the pooled midranks by their
/// (doubled, hence integral) rank sum.
pub fn mann_whitney_exact(a: &[f64], b: &[f64]) -> Result<f64> {
    check_samples(a, b)?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let doubled: Vec<usize> = midranks(&pooled).iter().map(|r| (2.0 * r).round() as usize).collect();
    let observed: usize = doubled[..a.len()].iter().sum();
    let k = a.len();
    let max_sum: usize = doubled.iter().sum();
    // ways[j][s]: subsets of size j with doubled rank sum s
    let mut ways = vec![vec![0.0f64; max_sum + 1]; k + 1];
    ways[0][0] = 1.0;
    for &r in &doubled {
        for j in (1..=k).rev() {
            let (lo, hi) = ways.split_at_mut(j);
            for s in (r..=max_sum).rev() {
                hi[0][s] += lo[j - 1][s - r];
            }
        }
    }
    let total: f64 = ways[k].iter().sum();
    let tail: f64 = ways[k][observed..].iter().sum();
    Ok(tail / total)
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity
/// correction.
pub fn mann_whitney_normal(a: &[f64], b: &[f64]) -> Result<f64> {
    check_samples(a, b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let u = u_statistic(a, b);
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1] == pooled[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return Ok(1.0);
    }
    let z = (u - na * nb / 2.0 - 0.5) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(1.0 - normal.cdf(z))
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dimension("correlation", &[x.len()], &[y.len()]));
    }
    if x.len() < 2 {
        return Err(Error::Empty("correlation needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numerical("correlation undefined for a constant variable".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation (Pearson on midranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson(&midranks(x), &midranks(y))
}

/// Median (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("median of an empty list".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}
