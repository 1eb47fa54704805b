//! Rank statistics: Wilcoxon signed-rank test, Spearman correlation and
//! type-7 quantiles.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    /// Differences tend to be positive.
    Greater,
    Less,
    TwoSided,
}

impl std::str::FromStr for Alternative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greater" => Ok(Alternative::Greater),
            "less" => Ok(Alternative::Less),
            "two-sided" | "two_sided" => Ok(Alternative::TwoSided),
            other => Err(Error::InvalidArgument(format!("unknown alternative '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WilcoxonMode {
    Exact,
    Normal,
}

impl std::str::FromStr for WilcoxonMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(WilcoxonMode::Exact),
            "normal" => Ok(WilcoxonMode::Normal),
            other => Err(Error::InvalidArgument(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Nonzero differences used.
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// `(W- - n(n+1)/4) / sd`, present in normal mode.
    pub z: Option<f64>,
    pub p: f64,
    pub alternative: Alternative,
    /// Mode actually used, after any fallback.
    pub mode: WilcoxonMode,
}

pub const EXACT_MAX_N: usize = 25;

/// Average ranks (1-based) with ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

/// Sizes of each run of tied values.
fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut k = 0;
    while k < sorted.len() {
        let mut j = k + 1;
        while j < sorted.len() && sorted[j] == sorted[k] {
            j += 1;
        }
        groups.push(j - k);
        k = j;
    }
    groups
}

/// Wilcoxon signed-rank test on paired differences. Zero differences are
/// dropped. Exact mode needs `n <= 25`, no zeros and no tied magnitudes;
/// otherwise it falls back to the normal approximation (no continuity
/// correction, tie-corrected variance).
pub fn wilcoxon_signed_rank(diffs: &[f64], alternative: Alternative, mode: WilcoxonMode) -> Result<WilcoxonResult> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidArgument("differences must be finite".into()));
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::DegenerateTest("all differences are zero".into()));
    }
    let n = nonzero.len();
    let mags: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&mags);
    let w_plus: f64 = nonzero.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let w_minus: f64 = nonzero.iter().zip(&ranks).filter(|(d, _)| **d < 0.0).map(|(_, r)| r).sum();
    let ties = tie_groups(&mags);

    let mut mode_used = mode;
    if mode == WilcoxonMode::Exact {
        let zeros = n != diffs.len();
        let tied = ties.iter().any(|&t| t > 1);
        if n > EXACT_MAX_N || zeros || tied {
            log::warn!(
                "exact Wilcoxon needs n <= {EXACT_MAX_N}, no zeros and no ties (n={n}, zeros={zeros}, ties={tied}); using the normal approximation"
            );
            mode_used = WilcoxonMode::Normal;
        }
    }

    let (z, p) = match mode_used {
        WilcoxonMode::Exact => (None, exact_p(n, w_plus, alternative)),
        WilcoxonMode::Normal => {
            let nf = n as f64;
            let mean = nf * (nf + 1.0) / 4.0;
            let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
            let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
            if !(var > 0.0) {
                return Err(Error::DegenerateTest("zero variance in the signed-rank statistic".into()));
            }
            let z = (w_minus - mean) / var.sqrt();
            let std = Normal::standard();
            let p = match alternative {
                Alternative::Greater => std.cdf(z),
                Alternative::Less => std.sf(z),
                Alternative::TwoSided => (2.0 * std.cdf(-z.abs())).min(1.0),
            };
            (Some(z), p)
        }
    };
    Ok(WilcoxonResult {
        n,
        w_plus,
        w_minus,
        z,
        p,
        alternative,
        mode: mode_used,
    })
}

/// Null distribution of `W+` for distinct ranks `1..=n`: `counts[w]` is the
/// number of sign assignments with `W+ = w`.
fn signed_rank_counts(n: usize) -> Vec<u64> {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0u64; max + 1];
    counts[0] = 1;
    for r in 1..=n {
        for w in (r..=max).rev() {
            counts[w] += counts[w - r];
        }
    }
    counts
}

fn exact_p(n: usize, w_plus: f64, alternative: Alternative) -> f64 {
    let counts = signed_rank_counts(n);
    let total = (1u64 << n) as f64;
    // Ranks are integers here since magnitudes are distinct.
    let w = w_plus.round() as usize;
    let upper: u64 = counts[w..].iter().sum();
    let lower: u64 = counts[..=w].iter().sum();
    let (pg, pl) = (upper as f64 / total, lower as f64 / total);
    match alternative {
        Alternative::Greater => pg,
        Alternative::Less => pl,
        Alternative::TwoSided => (2.0 * pg.min(pl)).min(1.0),
    }
}

/// Spearman rank correlation with average ranks. Returns `(rho, degenerate)`;
/// when either side has zero variance `rho` is 0 and `degenerate` is set.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, bool)> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!("{} x values for {} y values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedMetric(format!("correlation needs at least 2 pairs, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("correlation inputs must be finite".into()));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

fn pearson(a: &[f64], b: &[f64]) -> (f64, bool) {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return (0.0, true);
    }
    ((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0), false)
}

/// Linear-interpolation quantile (type 7) of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::UndefinedMetric("quantile of empty data".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("quantile level {q} outside [0,1]")));
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}
