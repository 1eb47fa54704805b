//! Evaluation analytics: BU/BI bias gaps, per-group error summaries,
//! rating-distribution shift and gate/sentiment correlation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sentiment::{ExtremeSets, PolarityGroup};
use crate::stats::{quantile_sorted, spearman};

/// MSE over interactions whose entity is negative-extreme minus MSE over
/// those whose entity is positive-extreme.
pub fn bias_gap(sq_errors: &[f64], entity: &[usize], sets: &ExtremeSets) -> Result<f64> {
    if sq_errors.len() != entity.len() {
        return Err(Error::InvalidArgument(format!(
            "{} errors for {} interactions",
            sq_errors.len(),
            entity.len()
        )));
    }
    let max = entity.iter().copied().max().unwrap_or(0);
    let bound = sets.negative.iter().chain(&sets.positive).copied().max().unwrap_or(0);
    let mut tag = vec![0i8; max.max(bound) + 1];
    for &e in &sets.negative {
        tag[e] = -1;
    }
    for &e in &sets.positive {
        tag[e] = 1;
    }
    let (mut neg, mut nn, mut pos, mut np) = (0.0, 0usize, 0.0, 0usize);
    for (&err, &e) in sq_errors.iter().zip(entity) {
        match tag[e] {
            -1 => {
                neg += err;
                nn += 1;
            }
            1 => {
                pos += err;
                np += 1;
            }
            _ => {}
        }
    }
    if nn == 0 || np == 0 {
        return Err(Error::UndefinedMetric(format!(
            "extreme set without interactions (negative {nn}, positive {np})"
        )));
    }
    Ok(neg / nn as f64 - pos / np as f64)
}

/// `(BU, BI)` from per-interaction squared errors.
pub fn bias_metrics(
    sq_errors: &[f64],
    users: &[usize],
    items: &[usize],
    user_sets: &ExtremeSets,
    item_sets: &ExtremeSets,
) -> Result<(f64, f64)> {
    Ok((
        bias_gap(sq_errors, users, user_sets)?,
        bias_gap(sq_errors, items, item_sets)?,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub label: String,
    /// Entities in the group with at least one interaction.
    pub count: usize,
    pub min: Option<f64>,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
}

/// Per-entity MSE, `None` for entities without interactions.
pub fn entity_mse(sq_errors: &[f64], entity: &[usize], n_entities: usize) -> Vec<Option<f64>> {
    let mut sum = vec![0.0; n_entities];
    let mut cnt = vec![0usize; n_entities];
    for (&err, &e) in sq_errors.iter().zip(entity) {
        sum[e] += err;
        cnt[e] += 1;
    }
    sum.iter()
        .zip(&cnt)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect()
}

/// Five-number summary and mean of per-entity MSE in each group.
pub fn group_mse_stats(sq_errors: &[f64], entity: &[usize], groups: &[PolarityGroup]) -> Result<Vec<GroupStats>> {
    if sq_errors.len() != entity.len() {
        return Err(Error::InvalidArgument("errors and entities differ in length".into()));
    }
    let n = groups
        .iter()
        .flat_map(|g| g.members.iter().copied())
        .chain(entity.iter().copied())
        .max()
        .map_or(0, |m| m + 1);
    let per_entity = entity_mse(sq_errors, entity, n);
    groups
        .iter()
        .map(|g| {
            let mut vals: Vec<f64> = g.members.iter().filter_map(|&e| per_entity[e]).collect();
            vals.sort_by(f64::total_cmp);
            let q = |p| quantile_sorted(&vals, p).ok();
            Ok(GroupStats {
                label: g.label.clone(),
                count: vals.len(),
                min: vals.first().copied(),
                q1: q(0.25),
                median: q(0.5),
                q3: q(0.75),
                max: vals.last().copied(),
                mean: (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64),
            })
        })
        .collect()
}

pub const DIST_LOW: f64 = 0.0;
pub const DIST_HIGH: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistBin {
    pub lo: f64,
    pub hi: f64,
    pub before: usize,
    pub after: usize,
    pub diff: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistDiff {
    pub bin_width: f64,
    pub bins: Vec<DistBin>,
}

fn bin_index(v: f64, lo: f64, width: f64, n: usize) -> usize {
    // The small nudge keeps values sitting on a bin edge (0.3 / 0.1) in the
    // upper bin despite representation error.
    let k = ((v - lo) / width + 1e-9).floor();
    if k.is_nan() || k < 0.0 {
        0
    } else {
        (k as usize).min(n - 1)
    }
}

/// Histogram over `[0, 5]` of `after` minus `before`, out-of-range values
/// clamped into the edge bins.
pub fn rating_distribution_diff(before: &[f64], after: &[f64], bin_width: f64) -> Result<DistDiff> {
    if before.len() != after.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions before, {} after",
            before.len(),
            after.len()
        )));
    }
    if !(bin_width > 0.0) || bin_width > DIST_HIGH - DIST_LOW {
        return Err(Error::InvalidArgument(format!("bad bin width {bin_width}")));
    }
    let n = ((DIST_HIGH - DIST_LOW) / bin_width).round().max(1.0) as usize;
    let mut b = vec![0usize; n];
    let mut a = vec![0usize; n];
    for &v in before {
        b[bin_index(v, DIST_LOW, bin_width, n)] += 1;
    }
    for &v in after {
        a[bin_index(v, DIST_LOW, bin_width, n)] += 1;
    }
    let bins = (0..n)
        .map(|k| DistBin {
            lo: DIST_LOW + k as f64 * bin_width,
            hi: if k + 1 == n { DIST_HIGH } else { DIST_LOW + (k + 1) as f64 * bin_width },
            before: b[k],
            after: a[k],
            diff: a[k] as i64 - b[k] as i64,
        })
        .collect();
    Ok(DistDiff { bin_width, bins })
}

pub const CORRELATION_BINS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_gate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub bins: Vec<CorrelationBin>,
    pub spearman: f64,
    /// Set when one side has zero variance and `spearman` is reported as 0.
    pub degenerate: bool,
    pub pairs: usize,
}

/// Gate values `y` against sentiment products `x` in `[-1, 1]`: 20 equal
/// bins with mean `y`, plus Spearman over all pairs.
pub fn sentiment_correlation(x: &[f64], y: &[f64]) -> Result<Correlation> {
    let (rho, degenerate) = spearman(x, y)?;
    if degenerate {
        log::warn!("sentiment correlation is degenerate (zero variance); reporting 0");
    }
    let width = 2.0 / CORRELATION_BINS as f64;
    let mut sum = [0.0; CORRELATION_BINS];
    let mut cnt = [0usize; CORRELATION_BINS];
    for (&xv, &yv) in x.iter().zip(y) {
        let k = bin_index(xv, -1.0, width, CORRELATION_BINS);
        sum[k] += yv;
        cnt[k] += 1;
    }
    let bins = (0..CORRELATION_BINS)
        .map(|k| CorrelationBin {
            lo: -1.0 + k as f64 * width,
            hi: if k + 1 == CORRELATION_BINS { 1.0 } else { -1.0 + (k + 1) as f64 * width },
            count: cnt[k],
            mean_gate: (cnt[k] > 0).then(|| sum[k] / cnt[k] as f64),
        })
        .collect();
    Ok(Correlation {
        bins,
        spearman: rho,
        degenerate,
        pairs: x.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub split: crate::data::Split,
    pub beta: f64,
    pub mse: f64,
    pub bu: f64,
    pub bi: f64,
    pub user_groups: Vec<GroupStats>,
    pub item_groups: Vec<GroupStats>,
    pub dist_diff: DistDiff,
    pub correlation: Correlation,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BiasReport {
    /// Writes `report.json`, `group_stats.csv`, `dist_diff.csv` and
    /// `correlation_bins.csv` into `dir`, returning the paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))?;

        let groups = dir.join("group_stats.csv");
        let mut w = csv::Writer::from_path(&groups)?;
        w.write_record(["entity", "group", "count", "min", "q1", "median", "q3", "max", "mean"])?;
        for (kind, stats) in [("user", &self.user_groups), ("item", &self.item_groups)] {
            for g in stats {
                w.write_record([
                    kind.to_string(),
                    g.label.clone(),
                    g.count.to_string(),
                    opt(g.min),
                    opt(g.q1),
                    opt(g.median),
                    opt(g.q3),
                    opt(g.max),
                    opt(g.mean),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(&groups, e))?;

        let dist = dir.join("dist_diff.csv");
        let mut w = csv::Writer::from_path(&dist)?;
        w.write_record(["lo", "hi", "before", "after", "diff"])?;
        for b in &self.dist_diff.bins {
            w.write_record([
                b.lo.to_string(),
                b.hi.to_string(),
                b.before.to_string(),
                b.after.to_string(),
                b.diff.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&dist, e))?;

        let corr = dir.join("correlation_bins.csv");
        let mut w = csv::Writer::from_path(&corr)?;
        w.write_record(["lo", "hi", "count", "mean_gate"])?;
        for b in &self.correlation.bins {
            w.write_record([b.lo.to_string(), b.hi.to_string(), b.count.to_string(), opt(b.mean_gate)])?;
        }
        w.flush().map_err(|e| Error::io(&corr, e))?;
        Ok(vec![json, groups, dist, corr])
    }
}
