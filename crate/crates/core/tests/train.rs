mod common;

use approx::assert_relative_eq;
use cfsd::autodiff::Checkpoint;
use cfsd::data::Split;
use cfsd::model::{Mode, ModelConfig, PredictionBundle};
use cfsd::train::{
    compute_losses, evaluate, loss_graph, model_from_checkpoint, mse, train, TrainConfig, DEFAULT_SEEDS,
};
use cfsd::{Error, Graph};
use common::tiny_corpus;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bundle(yuis: f64, yu: f64, yi: f64) -> PredictionBundle<f64> {
    PredictionBundle {
        q_m: 0.0,
        y_hat_u: yu,
        y_hat_i: yi,
        s_ui: 0.0,
        sigma_s: 0.5,
        y_hat_ui: 2.0 * yuis,
        y_hat_uis: yuis,
        y_debiased: None,
    }
}

fn small_train_config() -> TrainConfig {
    TrainConfig {
        batch_size: 32,
        max_epochs: 3,
        model: ModelConfig {
            d_w: 8,
            d_h: 8,
            d_c: 8,
            d_z: 8,
            d_a: 4,
            d_m: 8,
            dropout: 0.2,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn loss_examples() {
    let l = compute_losses(&[bundle(3.0, 3.0, 3.0)], &[3.0], 0.001, 0.001).unwrap();
    assert_eq!((l.total, l.rc, l.user, l.item), (0.0, 0.0, 0.0, 0.0));
    let l = compute_losses(&[bundle(1.0, 3.0, 3.0)], &[3.0], 0.001, 0.001).unwrap();
    assert_eq!((l.total, l.rc, l.user, l.item), (2.0, 2.0, 0.0, 0.0));
    let bs = [bundle(1.5, 2.0, 4.0), bundle(4.0, 1.0, 2.5)];
    let l = compute_losses(&bs, &[3.0, 5.0], 0.0, 0.0).unwrap();
    assert_eq!(l.total, l.rc);
    assert!(compute_losses::<f64>(&[], &[], 0.1, 0.1).is_err());
}

#[test]
fn denominators_differ_between_main_and_auxiliary_losses() {
    let bs = [bundle(2.0, 2.0, 2.0), bundle(4.5, 4.5, 4.5)];
    let l = compute_losses(&bs, &[3.0, 3.0], 1.0, 1.0).unwrap();
    let mse = (1.0 + 2.25) / 2.0;
    assert_relative_eq!(l.total, 2.5 * mse, epsilon = 1e-15);
    assert_relative_eq!(l.rc, 0.5 * mse, epsilon = 1e-15);
}

#[test]
fn graph_losses_match_and_decompose() {
    let corpus = tiny_corpus(12, 10, 6, [1.0, 0.0, 0.0], 3);
    let cfg = small_train_config();
    let model = cfsd::model::Model::<f64>::init(cfg.model.clone(), corpus.vocab.len(), 12, 10, 1).unwrap();
    let pairs: Vec<(usize, usize)> = (0..20).map(|k| (corpus.users[k], corpus.items[k])).collect();
    let targets: Vec<f64> = (0..20).map(|k| corpus.rating(k)).collect();
    let mut g = Graph::new();
    let lv = model.leaves(&mut g);
    let out = model
        .forward_batch(&mut g, &lv, (&corpus.user_docs, &corpus.item_docs), &pairs, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap();
    let lvars = loss_graph(&mut g, &out, &targets, 0.3, 0.7).unwrap();
    let from_graph = lvars.values(&g);
    let direct = compute_losses(&out.bundles(&g), &targets, 0.3, 0.7).unwrap();
    for (a, b) in [
        (from_graph.total, direct.total),
        (from_graph.rc, direct.rc),
        (from_graph.user, direct.user),
        (from_graph.item, direct.item),
    ] {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((from_graph.total - (from_graph.rc + 0.3 * from_graph.user + 0.7 * from_graph.item)).abs() < 1e-12);
}

#[test]
fn mse_examples() {
    assert_eq!(mse(&[1.0, 1.0], &[0.0, 2.0]).unwrap(), 1.0);
    assert_eq!(mse(&[2.0, 3.0], &[2.0, 3.0]).unwrap(), 0.0);
    assert!(mse(&[], &[]).is_err());
}

#[test]
fn evaluation_matches_single_pair_forward() {
    let corpus = tiny_corpus(12, 10, 6, [0.8, 0.1, 0.1], 5);
    let cfg = small_train_config();
    let model = cfsd::model::Model::<f64>::init(cfg.model.clone(), corpus.vocab.len(), 12, 10, 1).unwrap();
    let ev = evaluate(&model, &corpus, Split::Test).unwrap();
    let mut sse = 0.0;
    for (&k, b) in ev.indices.iter().zip(&ev.bundles) {
        let single = model
            .forward(
                (&corpus.user_docs, &corpus.item_docs),
                corpus.users[k],
                corpus.items[k],
                Mode::Eval,
                &mut ChaCha8Rng::seed_from_u64(0),
            )
            .unwrap();
        assert_eq!(&single, b);
        sse += (corpus.rating(k) - single.y_hat_uis).powi(2);
    }
    assert_eq!(ev.mse, sse / ev.indices.len() as f64);
    let mut empty = corpus.clone();
    empty.splits.iter_mut().for_each(|s| *s = Split::Train);
    assert!(evaluate(&model, &empty, Split::Val).is_err());
}

#[test]
fn training_is_deterministic_and_selects_best_epoch() {
    let corpus = tiny_corpus(16, 12, 6, [0.8, 0.1, 0.1], 9);
    let cfg = small_train_config();
    let a = train::<f64>(&corpus, &cfg).unwrap();
    let b = train::<f64>(&corpus, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.history.epochs, b.history.epochs);
    assert_eq!(a.history.best_epoch, b.history.best_epoch);
    assert!(a.history.epochs.len() <= cfg.max_epochs);
    let best = a.history.best().val_mse;
    assert!(a.history.epochs.iter().all(|r| r.val_mse >= best));
    assert_eq!(evaluate(&a.model, &corpus, Split::Val).unwrap().mse, best);
    for r in &a.history.epochs {
        assert!((r.loss - (r.l_rc + cfg.alpha_u * r.l_u + cfg.alpha_i * r.l_i)).abs() < 1e-12);
    }
    assert_eq!(
        a.model.params.get(a.model.ids.word_emb).row(0),
        vec![0.0; 8].as_slice()
    );
}

#[test]
fn early_stopping_respects_patience() {
    let corpus = tiny_corpus(16, 12, 6, [0.8, 0.1, 0.1], 9);
    let cfg = TrainConfig {
        max_epochs: 60,
        patience: 1,
        lr: 0.05,
        ..small_train_config()
    };
    let out = train::<f64>(&corpus, &cfg).unwrap();
    let h = &out.history;
    assert!(h.epochs.len() < 60);
    assert_eq!(h.epochs.len(), h.best_epoch + 2);
}

#[test]
fn every_default_seed_trains() {
    let corpus = tiny_corpus(12, 10, 6, [0.8, 0.1, 0.1], 2);
    for seed in DEFAULT_SEEDS {
        let cfg = TrainConfig {
            seed,
            max_epochs: 1,
            ..small_train_config()
        };
        let out = train::<f64>(&corpus, &cfg).unwrap();
        assert!(out.model.params.all_finite());
    }
}

#[test]
fn full_batch_loss_decreases_at_small_lr() {
    let corpus = tiny_corpus(10, 10, 5, [1.0, 0.0, 0.0], 4);
    let cfg = TrainConfig {
        lr: 1e-3,
        batch_size: corpus.len(),
        max_epochs: 6,
        patience: 10,
        model: ModelConfig {
            dropout: 0.0,
            ..small_train_config().model
        },
        ..small_train_config()
    };
    let out = train::<f64>(&corpus, &cfg).unwrap();
    let losses: Vec<f64> = out.history.epochs.iter().map(|r| r.loss).collect();
    assert_eq!(losses.len(), 6);
    for w in losses.windows(2) {
        assert!(w[1] <= w[0], "{losses:?}");
    }
}

#[test]
fn overfits_two_hundred_interactions() {
    let corpus = tiny_corpus(20, 20, 10, [1.0, 0.0, 0.0], 670849);
    assert_eq!(corpus.len(), 200);
    let cfg = TrainConfig {
        batch_size: corpus.len(),
        max_epochs: 500,
        patience: 500,
        model: ModelConfig {
            d_w: 16,
            d_h: 16,
            d_c: 16,
            d_z: 16,
            d_a: 8,
            d_m: 16,
            dropout: 0.0,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    };
    let out = train::<f64>(&corpus, &cfg).unwrap();
    let best = out.history.best().val_mse;
    assert_eq!(out.history.selection_split, Split::Train);
    assert!(best < 0.05, "train MSE {best} after {} steps", out.history.epochs.len());
}

#[test]
fn checkpoint_round_trip_reproduces_validation_mse() {
    let corpus = tiny_corpus(16, 12, 6, [0.8, 0.1, 0.1], 9);
    let cfg = small_train_config();
    let out = train::<f64>(&corpus, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("model.ckpt");
    out.checkpoint(&cfg).unwrap().save(&p).unwrap();
    let (model, back_cfg) = model_from_checkpoint(&Checkpoint::<f64>::load(&p).unwrap()).unwrap();
    assert_eq!(back_cfg, cfg);
    assert_eq!(
        evaluate(&model, &corpus, Split::Val).unwrap().mse.to_bits(),
        evaluate(&out.model, &corpus, Split::Val).unwrap().mse.to_bits()
    );
    let mut tampered = out.checkpoint(&cfg).unwrap();
    tampered.config["lr"] = serde_json::json!(0.5);
    assert!(model_from_checkpoint(&tampered).is_err());
}

#[test]
fn non_finite_loss_reports_diagnostics() {
    let mut corpus = tiny_corpus(12, 10, 6, [1.0, 0.0, 0.0], 2);
    corpus.interactions[3].rating = 1e300;
    match train::<f64>(&corpus, &small_train_config()) {
        Err(Error::Diverged { epoch, loss, .. }) => {
            assert_eq!(epoch, 0);
            assert!(!loss.is_finite());
        }
        other => panic!("expected divergence, got {:?}", other.map(|o| o.history)),
    }
}

#[test]
fn config_validation() {
    assert!(TrainConfig { lr: 0.0, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { alpha_u: -1.0, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { patience: 0, ..TrainConfig::default() }.validate().is_err());
    let json = serde_json::to_string(&TrainConfig::default()).unwrap();
    let back: TrainConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, TrainConfig::default());
    let partial: TrainConfig = serde_json::from_str(r#"{"lr": 0.01}"#).unwrap();
    assert_eq!(partial.batch_size, 128);
}
