use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{Vocab, PAD};
use super::Interaction;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split '{other}'"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Seeded shuffle followed by prefix cuts at the cumulative ratios.
pub fn split(n: usize, ratios: [f64; 3], seed: u64) -> Result<Vec<Split>> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("split ratios {ratios:?} must be in [0,1] and sum to 1")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut1 = ((n as f64) * ratios[0]).round() as usize;
    let cut2 = (((n as f64) * (ratios[0] + ratios[1])).round() as usize).clamp(cut1, n);
    let cut1 = cut1.min(n);
    let mut tags = vec![Split::Test; n];
    for (pos, &idx) in order.iter().enumerate() {
        tags[idx] = if pos < cut1 {
            Split::Train
        } else if pos < cut2 {
            Split::Val
        } else {
            Split::Test
        };
    }
    for (s, r) in [Split::Train, Split::Val, Split::Test].iter().zip(ratios) {
        if r > 0.0 && !tags.contains(s) {
            log::warn!("{s} split is empty for {n} interactions");
        }
    }
    Ok(tags)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub min_freq: usize,
    pub max_vocab: usize,
    /// Entity documents are truncated to this many tokens.
    pub max_tokens: usize,
    /// Documents are PAD-extended to at least this length (the conv width).
    pub min_doc_len: usize,
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            min_freq: 1,
            max_vocab: 50_000,
            max_tokens: 500,
            min_doc_len: 5,
            ratios: [0.8, 0.1, 0.1],
            seed: 670849,
        }
    }
}

/// Indexed interactions with vocabulary, split tags and per-entity
/// documents built from training reviews only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub interactions: Vec<Interaction>,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    /// Dense user index per interaction.
    pub users: Vec<usize>,
    /// Dense item index per interaction.
    pub items: Vec<usize>,
    pub splits: Vec<Split>,
    pub vocab: Vocab,
    pub user_docs: Vec<Vec<u32>>,
    pub item_docs: Vec<Vec<u32>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub users: usize,
    pub items: usize,
    pub reviews: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub vocab: usize,
}

fn dense_index<'a>(ids: impl Iterator<Item = &'a str>) -> (Vec<String>, Vec<usize>) {
    let mut map: HashMap<&str, usize> = HashMap::new();
    let mut names = Vec::new();
    let idx = ids
        .map(|id| {
            *map.entry(id).or_insert_with(|| {
                names.push(id.to_string());
                names.len() - 1
            })
        })
        .collect();
    (names, idx)
}

impl Corpus {
    pub fn build(interactions: Vec<Interaction>, config: CorpusConfig) -> Result<Self> {
        if interactions.is_empty() {
            return Err(Error::EmptyDataset("no interactions".into()));
        }
        let (user_ids, users) = dense_index(interactions.iter().map(|i| i.user_id.as_str()));
        let (item_ids, items) = dense_index(interactions.iter().map(|i| i.item_id.as_str()));
        let splits = split(interactions.len(), config.ratios, config.seed)?;
        let vocab = Vocab::build(
            interactions
                .iter()
                .zip(&splits)
                .filter(|(_, s)| **s == Split::Train)
                .map(|(i, _)| i.review.as_slice()),
            config.min_freq,
            config.max_vocab,
        );
        let mut corpus = Corpus {
            config,
            interactions,
            user_ids,
            item_ids,
            users,
            items,
            splits,
            vocab,
            user_docs: Vec::new(),
            item_docs: Vec::new(),
        };
        corpus.build_docs();
        Ok(corpus)
    }

    /// Rebuilds `user_docs`/`item_docs` from training reviews, concatenated
    /// in timestamp order (input order when timestamps are absent or tied).
    pub fn build_docs(&mut self) {
        let mut order: Vec<usize> = (0..self.interactions.len())
            .filter(|&k| self.splits[k] == Split::Train)
            .collect();
        order.sort_by_key(|&k| self.interactions[k].timestamp);
        let encoded: HashMap<usize, Vec<u32>> = order
            .iter()
            .map(|&k| (k, self.vocab.encode(&self.interactions[k].review)))
            .collect();
        let mut user_docs = vec![Vec::new(); self.user_ids.len()];
        let mut item_docs = vec![Vec::new(); self.item_ids.len()];
        for &k in &order {
            user_docs[self.users[k]].extend_from_slice(&encoded[&k]);
            item_docs[self.items[k]].extend_from_slice(&encoded[&k]);
        }
        let (max, min) = (self.config.max_tokens, self.config.min_doc_len);
        for doc in user_docs.iter_mut().chain(item_docs.iter_mut()) {
            doc.truncate(max);
            if doc.len() < min {
                doc.resize(min, PAD);
            }
        }
        self.user_docs = user_docs;
        self.item_docs = item_docs;
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.splits[k] == split).collect()
    }

    pub fn rating(&self, k: usize) -> f64 {
        self.interactions[k].rating
    }

    pub fn stats(&self) -> CorpusStats {
        let count = |s| self.splits.iter().filter(|&&x| x == s).count();
        CorpusStats {
            users: self.num_users(),
            items: self.num_items(),
            reviews: self.len(),
            train: count(Split::Train),
            val: count(Split::Val),
            test: count(Split::Test),
            vocab: self.vocab.len(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let corpus: Corpus = serde_json::from_reader(BufReader::new(file))?;
        corpus.validate()?;
        Ok(corpus)
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.users.len() != n || self.items.len() != n || self.splits.len() != n {
            return Err(Error::InvalidArgument("corpus arrays disagree in length".into()));
        }
        if self.users.iter().any(|&u| u >= self.num_users()) || self.items.iter().any(|&i| i >= self.num_items()) {
            return Err(Error::InvalidIndex("corpus entity index out of range".into()));
        }
        if self.user_docs.len() != self.num_users() || self.item_docs.len() != self.num_items() {
            return Err(Error::InvalidArgument("corpus documents do not cover every entity".into()));
        }
        Ok(())
    }
}
