//! Counterfactual inference: remove the sentiment-mediated reference effect
//! with `y_deb = y_ui * sigma(s) - beta * sigma(s)`, and sweep `beta`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Split};
use crate::error::{Error, Result};
use crate::metrics::{bias_metrics, group_mse_stats, rating_distribution_diff, sentiment_correlation, BiasReport};
use crate::model::{Model, PredictionBundle};
use crate::scalar::Scalar;
use crate::sentiment::{decile_groups, extreme_deciles, ExtremeSets, PolarityProfile};
use crate::train::{evaluate, mse};

pub const DEFAULT_BETAS: [f64; 12] = [0.01, 0.02, 0.03, 0.04, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selection {
    /// Lowest MSE; ties go to the smaller beta.
    Mse,
    /// Lowest `MSE + lambda * (BU + BI)`.
    MseBiasTradeoff { lambda: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DebiasConfig {
    pub beta: f64,
    pub sweep: Vec<f64>,
    pub selection: Selection,
    /// Clip debiased outputs to `[1, 5]` before scoring.
    pub clip: bool,
}

impl Default for DebiasConfig {
    fn default() -> Self {
        DebiasConfig {
            beta: 0.0,
            sweep: DEFAULT_BETAS.to_vec(),
            selection: Selection::Mse,
            clip: false,
        }
    }
}

impl DebiasConfig {
    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if self.sweep.is_empty() {
            return Err(Error::InvalidArgument("beta sweep set is empty".into()));
        }
        self.sweep.iter().try_for_each(|&b| check_beta(b))
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta >= 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("beta must be finite and >= 0, got {beta}")))
    }
}

/// Natural-direct-effect estimate for one prediction.
pub fn debias<T: Scalar>(b: &PredictionBundle<T>, beta: f64) -> T {
    b.y_hat_uis - T::lit(beta) * b.sigma_s
}

/// Debiased predictions as `f64`, optionally clipped to `[1, 5]`.
pub fn debiased(bundles: &[PredictionBundle<impl Scalar>], beta: f64, clip: bool) -> Vec<f64> {
    bundles
        .iter()
        .map(|b| {
            let v = debias(b, beta).as_f64();
            if clip {
                v.clamp(1.0, 5.0)
            } else {
                v
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub mse: f64,
    pub bu: f64,
    pub bi: f64,
    pub selected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub split: Split,
    pub rows: Vec<SweepRow>,
    pub selected_beta: f64,
}

impl SweepTable {
    pub fn row(&self, beta: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.beta == beta)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["beta", "mse", "bu", "bi", "selected"])?;
        for r in &self.rows {
            w.write_record([
                r.beta.to_string(),
                r.mse.to_string(),
                r.bu.to_string(),
                r.bi.to_string(),
                r.selected.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Everything the per-beta metrics need, aligned with the evaluated split.
pub struct SweepInputs<'a, T> {
    pub bundles: &'a [PredictionBundle<T>],
    pub targets: &'a [f64],
    pub users: &'a [usize],
    pub items: &'a [usize],
    pub user_sets: &'a ExtremeSets,
    pub item_sets: &'a ExtremeSets,
}

/// Scores every beta on cached bundles and marks the selected one.
pub fn sweep_from_bundles<T: Scalar>(inp: &SweepInputs<'_, T>, cfg: &DebiasConfig, split: Split) -> Result<SweepTable> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.sweep.len());
    for &beta in &cfg.sweep {
        let preds = debiased(inp.bundles, beta, cfg.clip);
        let sq: Vec<f64> = preds.iter().zip(inp.targets).map(|(p, y)| (y - p).powi(2)).collect();
        let m = mse(&preds, inp.targets)?;
        let (bu, bi) = bias_metrics(&sq, inp.users, inp.items, inp.user_sets, inp.item_sets)?;
        rows.push(SweepRow {
            beta,
            mse: m,
            bu,
            bi,
            selected: false,
        });
    }
    let score = |r: &SweepRow| match cfg.selection {
        Selection::Mse => r.mse,
        Selection::MseBiasTradeoff { lambda } => r.mse + lambda * (r.bu + r.bi),
    };
    let mut best = 0;
    for k in 1..rows.len() {
        let (s, b) = (score(&rows[k]), score(&rows[best]));
        if s < b || (s == b && rows[k].beta < rows[best].beta) {
            best = k;
        }
    }
    rows[best].selected = true;
    Ok(SweepTable {
        split,
        selected_beta: rows[best].beta,
        rows,
    })
}

/// Extreme-decile sets for users and items.
pub fn extremes(profile: &PolarityProfile) -> Result<(ExtremeSets, ExtremeSets)> {
    Ok((extreme_deciles(&profile.users)?, extreme_deciles(&profile.items)?))
}

/// One eval pass over `split`, then per-beta metrics.
pub fn beta_sweep<T: Scalar>(
    model: &Model<T>,
    corpus: &Corpus,
    split: Split,
    profile: &PolarityProfile,
    cfg: &DebiasConfig,
) -> Result<SweepTable> {
    cfg.validate()?;
    let ev = evaluate(model, corpus, split)?;
    let targets = ev.targets(corpus);
    let users: Vec<usize> = ev.indices.iter().map(|&k| corpus.users[k]).collect();
    let items: Vec<usize> = ev.indices.iter().map(|&k| corpus.items[k]).collect();
    let (us, is) = extremes(profile)?;
    let inp = SweepInputs {
        bundles: &ev.bundles,
        targets: &targets,
        users: &users,
        items: &items,
        user_sets: &us,
        item_sets: &is,
    };
    sweep_from_bundles(&inp, cfg, split)
}

/// Full bias report for predictions debiased at `beta`, with the biased
/// predictions as the before-state of the distribution shift.
pub fn analyze<T: Scalar>(
    model: &Model<T>,
    corpus: &Corpus,
    split: Split,
    profile: &PolarityProfile,
    beta: f64,
    clip: bool,
) -> Result<BiasReport> {
    check_beta(beta)?;
    let ev = evaluate(model, corpus, split)?;
    let targets = ev.targets(corpus);
    let users: Vec<usize> = ev.indices.iter().map(|&k| corpus.users[k]).collect();
    let items: Vec<usize> = ev.indices.iter().map(|&k| corpus.items[k]).collect();
    let before: Vec<f64> = ev.bundles.iter().map(|b| b.y_hat_uis.as_f64()).collect();
    let after = debiased(&ev.bundles, beta, clip);
    let sq: Vec<f64> = after.iter().zip(&targets).map(|(p, y)| (y - p).powi(2)).collect();
    let (us, is) = extremes(profile)?;
    let (bu, bi) = bias_metrics(&sq, &users, &items, &us, &is)?;
    let x: Vec<f64> = users
        .iter()
        .zip(&items)
        .map(|(&u, &i)| profile.users[u] * profile.items[i])
        .collect();
    let gate: Vec<f64> = ev.bundles.iter().map(|b| b.sigma_s.as_f64()).collect();
    Ok(BiasReport {
        split,
        beta,
        mse: mse(&after, &targets)?,
        bu,
        bi,
        user_groups: group_mse_stats(&sq, &users, &decile_groups(&profile.users)?)?,
        item_groups: group_mse_stats(&sq, &items, &decile_groups(&profile.items)?)?,
        dist_diff: rating_distribution_diff(&before, &after, 0.1)?,
        correlation: sentiment_correlation(&x, &gate)?,
    })
}
