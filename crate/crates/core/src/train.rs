//! Multi-task training: `L = L_RC + alpha_u L_U + alpha_i L_I` with Adam,
//! seeded shuffling and early stopping on validation MSE.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{adam_step, AdamConfig, AdamState, Checkpoint, Graph, Tensor, Var};
use crate::data::{Corpus, Split, PAD};
use crate::error::{Error, Result};
use crate::model::{BatchVars, Mode, Model, ModelConfig, PredictionBundle};
use crate::scalar::Scalar;

/// Seeds used for multi-seed runs.
pub const DEFAULT_SEEDS: [u64; 5] = [670849, 234725, 300191, 49002, 237952];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub alpha_u: f64,
    pub alpha_i: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.002,
            weight_decay: 1e-6,
            alpha_u: 0.001,
            alpha_i: 0.001,
            batch_size: 128,
            max_epochs: 30,
            patience: 5,
            seed: DEFAULT_SEEDS[0],
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lr {} must be positive and weight decay {} non-negative",
                self.lr, self.weight_decay
            )));
        }
        if !(self.alpha_u >= 0.0) || !(self.alpha_i >= 0.0) {
            return Err(Error::InvalidArgument("alpha_u and alpha_i must be non-negative".into()));
        }
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidArgument(
                "patience, batch_size and max_epochs must be at least 1".into(),
            ));
        }
        self.model.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: TrainConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Hex SHA-256 of the JSON serialisation.
pub fn config_hash<S: Serialize>(value: &S) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Loss values for one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub total: f64,
    pub rc: f64,
    pub user: f64,
    pub item: f64,
}

/// Losses from finished predictions.
pub fn compute_losses<T: Scalar>(
    bundles: &[PredictionBundle<T>],
    targets: &[f64],
    alpha_u: f64,
    alpha_i: f64,
) -> Result<Losses> {
    if bundles.is_empty() || bundles.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} targets",
            bundles.len(),
            targets.len()
        )));
    }
    let n = bundles.len() as f64;
    let sq = |f: &dyn Fn(&PredictionBundle<T>) -> T| -> f64 {
        bundles
            .iter()
            .zip(targets)
            .map(|(b, y)| (y - f(b).as_f64()).powi(2))
            .sum()
    };
    let rc = sq(&|b| b.y_hat_uis) / (2.0 * n);
    let user = sq(&|b| b.y_hat_u) / n;
    let item = sq(&|b| b.y_hat_i) / n;
    Ok(Losses {
        total: rc + alpha_u * user + alpha_i * item,
        rc,
        user,
        item,
    })
}

/// Graph nodes of the batch objective.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub rc: Var,
    pub user: Var,
    pub item: Var,
}

impl LossVars {
    pub fn values<T: Scalar>(&self, g: &Graph<'_, T>) -> Losses {
        let v = |x: Var| g.value(x).item().as_f64();
        Losses {
            total: v(self.total),
            rc: v(self.rc),
            user: v(self.user),
            item: v(self.item),
        }
    }
}

/// Builds the multi-task objective on top of a batch forward pass.
pub fn loss_graph<T: Scalar>(
    g: &mut Graph<'_, T>,
    out: &BatchVars,
    targets: &[f64],
    alpha_u: f64,
    alpha_i: f64,
) -> Result<LossVars> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let n = targets.len() as f64;
    let y = g.constant(Tensor::vector(targets.iter().map(|&t| T::lit(t)).collect()));
    let sse = |g: &mut Graph<'_, T>, pred: Var| -> Result<Var> {
        let r = g.sub(y, pred)?;
        let sq = g.square(r);
        Ok(g.sum(sq))
    };
    let rc = sse(g, out.y_hat_uis)?;
    let rc = g.scale(rc, T::lit(1.0 / (2.0 * n)));
    let user = sse(g, out.y_hat_u)?;
    let user = g.scale(user, T::lit(1.0 / n));
    let item = sse(g, out.y_hat_i)?;
    let item = g.scale(item, T::lit(1.0 / n));
    let wu = g.scale(user, T::lit(alpha_u));
    let wi = g.scale(item, T::lit(alpha_i));
    let total = g.add(rc, wu)?;
    let total = g.add(total, wi)?;
    Ok(LossVars { total, rc, user, item })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub l_rc: f64,
    pub l_u: f64,
    pub l_i: f64,
    pub val_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Split used for model selection (validation, or train when it is empty).
    pub selection_split: Split,
    pub wall_time_secs: f64,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "L", "L_RC", "L_U", "L_I", "val_mse"])?;
        for r in &self.epochs {
            w.write_record([
                r.epoch.to_string(),
                r.loss.to_string(),
                r.l_rc.to_string(),
                r.l_u.to_string(),
                r.l_i.to_string(),
                r.val_mse.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub history: TrainHistory,
}

impl<T: Scalar> TrainOutcome<T> {
    pub fn checkpoint(&self, config: &TrainConfig) -> Result<Checkpoint<T>> {
        Ok(Checkpoint {
            params: self.model.params.clone(),
            seed: config.seed,
            config_hash: config_hash(config)?,
            config: serde_json::to_value(config)?,
        })
    }
}

/// Rebuilds a model from a checkpoint written by [`TrainOutcome::checkpoint`].
pub fn model_from_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>) -> Result<(Model<T>, TrainConfig)> {
    let cfg: TrainConfig = serde_json::from_value(ckpt.config.clone())?;
    if config_hash(&cfg)? != ckpt.config_hash {
        return Err(Error::Checkpoint("config hash does not match the stored config".into()));
    }
    let model = Model::from_params(cfg.model.clone(), ckpt.params.clone())?;
    Ok((model, cfg))
}

/// Eval-mode predictions and MSE on `ŷ_uis` for one split.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation<T> {
    pub split: Split,
    pub indices: Vec<usize>,
    pub bundles: Vec<PredictionBundle<T>>,
    pub mse: f64,
}

impl<T: Scalar> Evaluation<T> {
    pub fn targets(&self, corpus: &Corpus) -> Vec<f64> {
        self.indices.iter().map(|&k| corpus.rating(k)).collect()
    }
}

/// Mean squared error, summed in input order.
pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let sse: f64 = predictions.iter().zip(targets).map(|(p, y)| (y - p).powi(2)).sum();
    Ok(sse / predictions.len() as f64)
}

pub fn evaluate<T: Scalar>(model: &Model<T>, corpus: &Corpus, split: Split) -> Result<Evaluation<T>> {
    let enc = model.encode_all(&corpus.user_docs, &corpus.item_docs)?;
    evaluate_with(model, &enc, corpus, split)
}

fn evaluate_with<T: Scalar>(
    model: &Model<T>,
    enc: &crate::model::Encodings<T>,
    corpus: &Corpus,
    split: Split,
) -> Result<Evaluation<T>> {
    let indices = corpus.indices(split);
    if indices.is_empty() {
        return Err(Error::InvalidArgument(format!("{split} split is empty")));
    }
    let pairs: Vec<(usize, usize)> = indices.iter().map(|&k| (corpus.users[k], corpus.items[k])).collect();
    let bundles = model.predict(enc, &pairs)?;
    let preds: Vec<f64> = bundles.iter().map(|b| b.y_hat_uis.as_f64()).collect();
    let targets: Vec<f64> = indices.iter().map(|&k| corpus.rating(k)).collect();
    let mse = mse(&preds, &targets)?;
    Ok(Evaluation {
        split,
        indices,
        bundles,
        mse,
    })
}

/// Gradient of every parameter for one batch, with the PAD embedding row
/// held at zero.
fn batch_gradients<T: Scalar>(
    model: &Model<T>,
    corpus: &Corpus,
    batch: &[usize],
    cfg: &TrainConfig,
    dropout_rng: &mut ChaCha8Rng,
) -> Result<(Losses, Vec<Tensor<T>>)> {
    let pairs: Vec<(usize, usize)> = batch.iter().map(|&k| (corpus.users[k], corpus.items[k])).collect();
    let targets: Vec<f64> = batch.iter().map(|&k| corpus.rating(k)).collect();
    let mut g = Graph::new();
    let lv = model.leaves(&mut g);
    let out = model.forward_batch(
        &mut g,
        &lv,
        (&corpus.user_docs, &corpus.item_docs),
        &pairs,
        Mode::Train,
        dropout_rng,
    )?;
    let lvars = loss_graph(&mut g, &out, &targets, cfg.alpha_u, cfg.alpha_i)?;
    let losses = lvars.values(&g);
    let mut grads = g.backward(lvars.total);
    let mut tensors: Vec<Tensor<T>> = lv
        .vars()
        .iter()
        .zip(model.params.tensors())
        .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    tensors[model.ids.word_emb.0].row_mut(PAD as usize).fill(T::zero());
    Ok((losses, tensors))
}

/// Trains from a seeded initialisation and returns the parameters of the
/// epoch with the lowest selection MSE.
pub fn train<T: Scalar>(corpus: &Corpus, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let start = Instant::now();
    let train_idx = corpus.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::EmptyDataset("train split is empty".into()));
    }
    let selection_split = if corpus.indices(Split::Val).is_empty() {
        log::warn!("validation split is empty; selecting on training MSE");
        Split::Train
    } else {
        Split::Val
    };
    let mut model = Model::<T>::init(
        cfg.model.clone(),
        corpus.vocab.len(),
        corpus.num_users(),
        corpus.num_items(),
        cfg.seed,
    )?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);
    let adam = cfg.adam();
    let mut state = AdamState::new(&model.params);

    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, crate::autodiff::ParamSet<T>)> = None;
    let mut order = train_idx.clone();
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = Losses::default();
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (l, grads) = batch_gradients(&model, corpus, batch, cfg, &mut dropout_rng)?;
            if ![l.total, l.rc, l.user, l.item].iter().all(|v| v.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: l.total,
                    rc: l.rc,
                    user: l.user,
                    item: l.item,
                });
            }
            adam_step(&mut model.params, &grads, &mut state, &adam)?;
            let w = batch.len() as f64;
            sums.total += l.total * w;
            sums.rc += l.rc * w;
            sums.user += l.user * w;
            sums.item += l.item * w;
        }
        let n = order.len() as f64;
        let sel = evaluate(&model, corpus, selection_split)?.mse;
        if !sel.is_finite() {
            return Err(Error::NumericFailure(format!("{selection_split} MSE is {sel} after epoch {epoch}")));
        }
        let rec = EpochRecord {
            epoch,
            loss: sums.total / n,
            l_rc: sums.rc / n,
            l_u: sums.user / n,
            l_i: sums.item / n,
            val_mse: sel,
        };
        log::info!(
            "epoch {epoch}: L {:.5} L_RC {:.5} {selection_split} MSE {sel:.5}",
            rec.loss,
            rec.l_rc
        );
        epochs.push(rec);
        match &best {
            Some((_, m, _)) if !(sel < *m) => {
                if epoch - best.as_ref().map_or(0, |b| b.0) >= cfg.patience {
                    log::info!("early stop after epoch {epoch}");
                    break;
                }
            }
            _ => best = Some((epoch, sel, model.params.clone())),
        }
    }
    let (best_epoch, _, params) = best.ok_or_else(|| Error::NumericFailure("no epoch completed".into()))?;
    model.params = params;
    Ok(TrainOutcome {
        model,
        history: TrainHistory {
            epochs,
            best_epoch,
            selection_split,
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
    })
}
