//! Descriptive summaries and the Mann-Whitney U test.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest per-group size for which the exact null distribution is used.
pub const EXACT_MAX_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n_defined: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); absent below two values.
    pub sd: Option<f64>,
    pub sem: Option<f64>,
}

/// Mean, sd and SEM over the defined values; undefined values are skipped.
pub fn summarize(values: &[Option<f64>]) -> Result<GroupSummary> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    summarize_defined(&defined)
}

pub fn summarize_defined(values: &[f64]) -> Result<GroupSummary> {
    let n = values.len();
    if n == 0 {
        return Err(Error::NoDefinedValues);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let (sd, sem) = if n >= 2 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        (Some(sd), Some(sd / (n as f64).sqrt()))
    } else {
        (None, None)
    };
    Ok(GroupSummary {
        n_defined: n,
        mean,
        sd,
        sem,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwuMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MwuResult {
    /// U for the first sample: its rank sum minus `n1 (n1 + 1) / 2`.
    pub u_statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    pub method: MwuMethod,
}

/// Average ranks (1-based) of the pooled sample, plus the tie-group sizes.
fn pooled_ranks(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut pooled: Vec<(f64, usize)> = a.iter().chain(b).copied().zip(0..).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < pooled.len() {
        let mut end = start + 1;
        while end < pooled.len() && pooled[end].0 == pooled[start].0 {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &(_, idx) in &pooled[start..end] {
            ranks[idx] = avg;
        }
        ties.push(end - start);
        start = end;
    }
    (ranks, ties)
}

/// Two-sided Mann-Whitney U test.
///
/// Uses the exact null distribution when both samples have at most
/// [`EXACT_MAX_N`] values and there are no ties, otherwise the normal
/// approximation with tie and continuity corrections.
///
/// ```
/// use inclusion_analytics::stats::{mann_whitney_u, MwuMethod};
/// let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
/// assert_eq!(r.u_statistic, 0.0);
/// assert!((r.p_value - 0.1).abs() < 1e-12);
/// assert_eq!(r.method, MwuMethod::Exact);
/// ```
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MwuResult> {
    let (ranks, ties) = pooled_ranks(a, b);
    let tie_free = ties.iter().all(|&t| t == 1);
    let method = if tie_free && a.len() <= EXACT_MAX_N && b.len() <= EXACT_MAX_N {
        MwuMethod::Exact
    } else {
        MwuMethod::NormalApprox
    };
    mwu_from_ranks(a.len(), b.len(), &ranks, &ties, method)
}

/// Forces a method. The exact method ignores ties.
pub fn mann_whitney_u_with(a: &[f64], b: &[f64], method: MwuMethod) -> Result<MwuResult> {
    let (ranks, ties) = pooled_ranks(a, b);
    mwu_from_ranks(a.len(), b.len(), &ranks, &ties, method)
}

fn mwu_from_ranks(n1: usize, n2: usize, ranks: &[f64], ties: &[usize], method: MwuMethod) -> Result<MwuResult> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Config("Mann-Whitney U needs two non-empty samples".into()));
    }
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let p = match method {
        MwuMethod::Exact => exact_p(n1, n2, u),
        MwuMethod::NormalApprox => normal_p(n1, n2, u, ties),
    };
    Ok(MwuResult {
        u_statistic: u,
        p_value: p.clamp(0.0, 1.0),
        method,
    })
}

/// Number of rank arrangements giving each U in `0..=n1*n2`, by the
/// recurrence `f(n1, n2, u) = f(n1 - 1, n2, u - n2) + f(n1, n2 - 1, u)`.
pub fn u_distribution(n1: usize, n2: usize) -> Vec<u128> {
    // table[j][u] holds f(i, j, u) for the current i.
    let max = n1 * n2;
    let mut table: Vec<Vec<u128>> = (0..=n2)
        .map(|_| {
            let mut v = vec![0u128; max + 1];
            v[0] = 1;
            v
        })
        .collect();
    for i in 1..=n1 {
        let mut next: Vec<Vec<u128>> = vec![vec![0u128; max + 1]; n2 + 1];
        next[0][0] = 1;
        for j in 1..=n2 {
            for u in 0..=i * j {
                let from_largest_in_first = if u >= j { table[j][u - j] } else { 0 };
                next[j][u] = from_largest_in_first + next[j - 1][u];
            }
        }
        table = next;
    }
    table.swap_remove(n2)
}

fn exact_p(n1: usize, n2: usize, u: f64) -> f64 {
    let dist = u_distribution(n1, n2);
    let total: u128 = dist.iter().sum();
    let u = u.round() as usize;
    let lower: u128 = dist[..=u].iter().sum();
    let upper: u128 = dist[u..].iter().sum();
    (2.0 * lower.min(upper) as f64 / total as f64).min(1.0)
}

fn normal_p(n1: usize, n2: usize, u: f64, ties: &[usize]) -> f64 {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let n = n1f + n2f;
    let mu = n1f * n2f / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = n1f * n2f / 12.0 * ((n + 1.0) - tie_term);
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u - mu).abs() - 0.5) / var.sqrt();
    // Two-sided tail: 2 * (1 - Phi(z)) = erfc(z / sqrt 2).
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}
