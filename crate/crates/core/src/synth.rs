//! Synthetic review corpora with a known, tunable sentiment bias.
//!
//! Every user and item gets a latent polarity `p` (uniform on a configurable
//! interval, skewed positive by default like real review data) and a latent
//! affinity vector. The noiseless rating is
//! `clamp(3 + p_u + p_i + p_u p_i + c <x_u, y_i>, 1, 5)`; the observed one adds
//! Gaussian noise with standard deviation
//! `sigma0 + gamma_b (max(0, -p_u) + max(0, -p_i))`, so entities with negative
//! polarity are harder to predict. Review words are drawn from the lexicon
//! around the polarity implied by the observed rating.

use std::collections::HashSet;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{tokenize, Corpus, CorpusConfig, Interaction};
use crate::error::{Error, Result};
use crate::sentiment::Lexicon;

const FILLER: [&str; 16] = [
    "the", "this", "it", "was", "and", "with", "for", "of", "item", "product", "box", "order", "i", "my", "package",
    "bought",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    /// Distinct items per user before the item top-up.
    pub per_user: usize,
    /// Extra noise sd per unit of negative polarity.
    pub bias_strength: f64,
    pub base_noise: f64,
    pub seed: u64,
    pub latent_dim: usize,
    /// Weight of the affinity dot product in the noiseless rating.
    pub affinity_weight: f64,
    pub review_len: usize,
    /// Probability that a review token is a sentiment word.
    pub sentiment_rate: f64,
    /// Minimum interactions per item (items are topped up to this).
    pub min_item_degree: usize,
    /// Latent polarities are uniform on this interval.
    pub polarity_range: [f64; 2],
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 1000,
            n_items: 500,
            per_user: 10,
            bias_strength: 1.0,
            base_noise: 0.3,
            seed: 670849,
            latent_dim: 4,
            affinity_weight: 0.5,
            review_len: 12,
            sentiment_rate: 0.6,
            min_item_degree: 5,
            polarity_range: [-0.5, 1.0],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_items == 0 || self.review_len == 0 || self.latent_dim == 0 {
            return Err(Error::InvalidArgument("synthetic counts must be positive".into()));
        }
        if self.per_user < 5 || self.per_user > self.n_items {
            return Err(Error::InvalidArgument(format!(
                "per_user {} must be in [5, n_items = {}]",
                self.per_user, self.n_items
            )));
        }
        if self.min_item_degree > self.n_users {
            return Err(Error::InvalidArgument("min_item_degree exceeds the number of users".into()));
        }
        if !(self.bias_strength >= 0.0) || !(self.base_noise >= 0.0) || !(self.affinity_weight >= 0.0) {
            return Err(Error::InvalidArgument("noise and weights must be non-negative".into()));
        }
        let [lo, hi] = self.polarity_range;
        if !(-1.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::InvalidArgument("polarity_range must satisfy -1 <= lo < hi <= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.sentiment_rate) {
            return Err(Error::InvalidArgument("sentiment_rate outside [0,1]".into()));
        }
        Ok(())
    }
}

/// Ground truth aligned with the corpus' dense indices and interaction order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub user_polarity: Vec<f64>,
    pub item_polarity: Vec<f64>,
    pub true_ratings: Vec<f64>,
}

impl SynthTruth {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Raw interactions plus truth indexed by generation order.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthRaw {
    pub interactions: Vec<Interaction>,
    pub user_polarity: Vec<f64>,
    pub item_polarity: Vec<f64>,
    pub true_ratings: Vec<f64>,
}

/// Polar lexicon words sorted by polarity, then word.
struct WordPool {
    words: Vec<(String, f64)>,
}

impl WordPool {
    fn new(lex: &Lexicon) -> Result<Self> {
        let mut words = lex.words_where(|p| p != 0.0);
        if words.is_empty() {
            return Err(Error::InvalidArgument("lexicon has no polar words".into()));
        }
        words.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        Ok(WordPool { words })
    }

    /// A word whose polarity is close to `target`: uniform among those within
    /// 0.25, else the nearest.
    fn sample(&self, target: f64, rng: &mut ChaCha8Rng) -> &str {
        let lo = self.words.partition_point(|w| w.1 < target - 0.25);
        let hi = self.words.partition_point(|w| w.1 <= target + 0.25);
        if lo < hi {
            return &self.words[rng.random_range(lo..hi)].0;
        }
        let best = self
            .words
            .iter()
            .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
            .expect("pool is non-empty");
        &best.0
    }
}

pub fn generate_raw(cfg: &SynthConfig, lex: &Lexicon) -> Result<SynthRaw> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pool = WordPool::new(lex)?;
    let filler: Vec<&str> = FILLER.iter().copied().filter(|w| lex.polarity(w).is_none()).collect();

    let [lo, hi] = cfg.polarity_range;
    let pu: Vec<f64> = (0..cfg.n_users).map(|_| rng.random_range(lo..=hi)).collect();
    let pi: Vec<f64> = (0..cfg.n_items).map(|_| rng.random_range(lo..=hi)).collect();
    // Component sd k^(-1/4) gives the dot product unit variance.
    let sd = (cfg.latent_dim as f64).powf(-0.25);
    let mut latent = |n: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..cfg.latent_dim)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * sd
                    })
                    .collect()
            })
            .collect()
    };
    let xu = latent(cfg.n_users);
    let yi = latent(cfg.n_items);

    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(cfg.n_users * cfg.per_user);
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let all_items: Vec<usize> = (0..cfg.n_items).collect();
    for u in 0..cfg.n_users {
        for &i in all_items.choose_multiple(&mut rng, cfg.per_user) {
            edges.push((u, i));
            seen.insert((u, i));
        }
    }
    let mut degree = vec![0usize; cfg.n_items];
    for &(_, i) in &edges {
        degree[i] += 1;
    }
    let all_users: Vec<usize> = (0..cfg.n_users).collect();
    for i in 0..cfg.n_items {
        if degree[i] >= cfg.min_item_degree {
            continue;
        }
        let mut users = all_users.clone();
        users.shuffle(&mut rng);
        for u in users {
            if degree[i] >= cfg.min_item_degree {
                break;
            }
            if seen.insert((u, i)) {
                edges.push((u, i));
                degree[i] += 1;
            }
        }
    }

    let mut interactions = Vec::with_capacity(edges.len());
    let mut true_ratings = Vec::with_capacity(edges.len());
    for (t, &(u, i)) in edges.iter().enumerate() {
        let dot: f64 = xu[u].iter().zip(&yi[i]).map(|(a, b)| a * b).sum();
        let truth = (3.0 + pu[u] + pi[i] + pu[u] * pi[i] + cfg.affinity_weight * dot).clamp(1.0, 5.0);
        let sd = cfg.base_noise + cfg.bias_strength * ((-pu[u]).max(0.0) + (-pi[i]).max(0.0));
        let noise = if sd > 0.0 {
            Normal::new(0.0, sd).map_err(|e| Error::InvalidArgument(e.to_string()))?.sample(&mut rng)
        } else {
            0.0
        };
        let rating = (truth + noise).clamp(1.0, 5.0);
        let target = (rating - 3.0) / 2.0;
        let words: Vec<&str> = (0..cfg.review_len)
            .map(|_| {
                if filler.is_empty() || rng.random_bool(cfg.sentiment_rate) {
                    let jitter: f64 = rng.random_range(-0.2..0.2);
                    pool.sample((target + jitter).clamp(-1.0, 1.0), &mut rng)
                } else {
                    filler[rng.random_range(0..filler.len())]
                }
            })
            .collect();
        let text = words.join(" ");
        interactions.push(Interaction {
            user_id: format!("U{u:05}"),
            item_id: format!("I{i:05}"),
            rating,
            review: tokenize(&text),
            raw_text: text,
            timestamp: Some(t as i64),
        });
        true_ratings.push(truth);
    }
    Ok(SynthRaw {
        interactions,
        user_polarity: pu,
        item_polarity: pi,
        true_ratings,
    })
}

/// Generates interactions and builds a corpus (vocabulary, split, documents)
/// with the generator seed as the split seed.
pub fn generate(cfg: &SynthConfig, lex: &Lexicon, corpus_cfg: CorpusConfig) -> Result<(Corpus, SynthTruth)> {
    let raw = generate_raw(cfg, lex)?;
    let corpus = Corpus::build(raw.interactions, corpus_cfg)?;
    let index = |id: &str| -> usize { id[1..].parse().expect("generated ids are numeric") };
    let truth = SynthTruth {
        user_polarity: corpus.user_ids.iter().map(|id| raw.user_polarity[index(id)]).collect(),
        item_polarity: corpus.item_ids.iter().map(|id| raw.item_polarity[index(id)]).collect(),
        true_ratings: raw.true_ratings,
    };
    Ok((corpus, truth))
}

/// Squared gap between observed and noiseless ratings per interaction.
pub fn oracle_errors(corpus: &Corpus, truth: &SynthTruth) -> Result<Vec<f64>> {
    if truth.true_ratings.len() != corpus.len() {
        return Err(Error::InvalidArgument(format!(
            "truth covers {} interactions, corpus has {}",
            truth.true_ratings.len(),
            corpus.len()
        )));
    }
    Ok(corpus
        .interactions
        .iter()
        .zip(&truth.true_ratings)
        .map(|(i, t)| (i.rating - t).powi(2))
        .collect())
}

/// Writes interactions as Amazon-style JSON lines.
pub fn write_amazon_jsonl(interactions: &[Interaction], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for i in interactions {
        let rec = serde_json::json!({
            "reviewerID": i.user_id,
            "asin": i.item_id,
            "overall": i.rating,
            "reviewText": i.raw_text,
            "unixReviewTime": i.timestamp,
        });
        let line = serde_json::to_string(&rec)?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
