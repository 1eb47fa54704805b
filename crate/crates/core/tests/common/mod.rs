#![allow(dead_code)]

use cfsd::data::{tokenize, Corpus, CorpusConfig, Interaction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POSITIVE: [&str; 6] = ["great", "love", "excellent", "tasty", "perfect", "fresh"];
const NEGATIVE: [&str; 6] = ["bad", "awful", "stale", "bland", "terrible", "broken"];
const FILLER: [&str; 6] = ["the", "box", "arrived", "with", "some", "coffee"];

/// Small structured corpus: rating = 3 + user bias + item bias, review
/// words drawn by rating.
pub fn tiny_interactions(n_users: usize, n_items: usize, per_user: usize, seed: u64) -> Vec<Interaction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ub: Vec<f64> = (0..n_users).map(|_| rng.random_range(-1.5..1.5)).collect();
    let ib: Vec<f64> = (0..n_items).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = Vec::new();
    for u in 0..n_users {
        for k in 0..per_user {
            let i = (u * 7 + k * 3) % n_items;
            let rating = (3.0 + ub[u] + ib[i]).round().clamp(1.0, 5.0);
            let mut words = Vec::new();
            for _ in 0..6 {
                let pool = if rng.random_bool(0.5) {
                    &FILLER
                } else if rating >= 3.0 {
                    &POSITIVE
                } else {
                    &NEGATIVE
                };
                words.push(pool[rng.random_range(0..pool.len())]);
            }
            let text = words.join(" ");
            out.push(Interaction {
                user_id: format!("u{u}"),
                item_id: format!("i{i}"),
                rating,
                review: tokenize(&text),
                raw_text: text,
                timestamp: Some((u * per_user + k) as i64),
            });
        }
    }
    out
}

pub fn tiny_corpus(n_users: usize, n_items: usize, per_user: usize, ratios: [f64; 3], seed: u64) -> Corpus {
    let cfg = CorpusConfig {
        ratios,
        seed,
        max_tokens: 60,
        ..CorpusConfig::default()
    };
    Corpus::build(tiny_interactions(n_users, n_items, per_user, seed), cfg).unwrap()
}
