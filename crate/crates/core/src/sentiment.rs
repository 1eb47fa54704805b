//! Lexicon polarity scoring and polarity-ranked entity groups.
//!
//! A review's polarity is the mean polarity of its lexicon hits; a hit
//! directly preceded by a negation token is scaled by the negation
//! multiplier. Entity polarity is the unweighted mean over the entity's
//! reviews. The shipped table is derived from the pattern/TextBlob
//! adjective lexicon (PDDL) by averaging each word's per-sense polarities.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Corpus;
use crate::error::{Error, Result};

const DEFAULT_TSV: &str = include_str!("../data/default_lexicon.tsv");

#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    polarity: HashMap<String, f64>,
    negations: HashSet<String>,
    negation_multiplier: f64,
}

impl Lexicon {
    pub fn new(polarity: HashMap<String, f64>) -> Result<Self> {
        if let Some((w, p)) = polarity.iter().find(|(_, p)| !(-1.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!("polarity {p} of '{w}' outside [-1,1]")));
        }
        Ok(Lexicon {
            polarity,
            negations: ["not", "no", "never", "n't"].iter().map(|s| s.to_string()).collect(),
            negation_multiplier: -0.5,
        })
    }

    pub fn with_negation(mut self, tokens: impl IntoIterator<Item = String>, multiplier: f64) -> Result<Self> {
        if !(-1.0..0.0).contains(&multiplier) {
            return Err(Error::InvalidArgument(format!("negation multiplier {multiplier} outside [-1,0)")));
        }
        self.negations = tokens.into_iter().collect();
        self.negation_multiplier = multiplier;
        Ok(self)
    }

    /// Parses `token<TAB>polarity` lines; blank lines and `#` comments are ignored.
    pub fn from_tsv(reader: impl BufRead) -> Result<Self> {
        let mut table = HashMap::new();
        for (n, line) in reader.lines().enumerate() {
            let line_no = n + 1;
            let line = line.map_err(|e| Error::Lexicon {
                line: line_no,
                message: e.to_string(),
            })?;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let bad = |message: String| Error::Lexicon { line: line_no, message };
            let (token, value) = trimmed
                .split_once('\t')
                .ok_or_else(|| bad("expected token<TAB>polarity".into()))?;
            if token.is_empty() {
                return Err(bad("empty token".into()));
            }
            let p: f64 = value
                .trim()
                .parse()
                .map_err(|_| bad(format!("'{value}' is not a number")))?;
            if !(-1.0..=1.0).contains(&p) {
                return Err(bad(format!("polarity {p} outside [-1,1]")));
            }
            table.insert(token.to_lowercase(), p);
        }
        Lexicon::new(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(std::io::BufReader::new(f))
    }

    /// The bundled word table.
    pub fn default_english() -> Self {
        Self::from_tsv(DEFAULT_TSV.as_bytes()).expect("bundled lexicon is valid")
    }

    pub fn polarity(&self, token: &str) -> Option<f64> {
        self.polarity.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.polarity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polarity.is_empty()
    }

    /// Entries whose polarity satisfies `pred`, sorted by word.
    pub fn words_where(&self, pred: impl Fn(f64) -> bool) -> Vec<(String, f64)> {
        let mut v: Vec<(String, f64)> = self
            .polarity
            .iter()
            .filter(|(_, &p)| pred(p))
            .map(|(w, &p)| (w.clone(), p))
            .collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    pub fn is_negation(&self, token: &str) -> bool {
        self.negations.contains(token)
    }
}

/// Mean polarity over matched tokens; 0 when nothing matches.
pub fn review_polarity(tokens: &[String], lex: &Lexicon) -> f64 {
    let mut sum = 0.0;
    let mut hits = 0usize;
    for (k, t) in tokens.iter().enumerate() {
        if let Some(p) = lex.polarity(t) {
            let negated = k > 0 && lex.is_negation(&tokens[k - 1]);
            sum += if negated { p * lex.negation_multiplier } else { p };
            hits += 1;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Unweighted mean of per-review polarities, summed in sorted order so the
/// result does not depend on review order.
pub fn entity_polarity(review_scores: &[f64]) -> Result<f64> {
    if review_scores.is_empty() {
        return Err(Error::UndefinedMetric("entity has no reviews".into()));
    }
    let mut sorted = review_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted.iter().sum::<f64>() / sorted.len() as f64)
}

/// Lexicon polarity per user and per item, averaged over all of the
/// entity's reviews regardless of split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarityProfile {
    pub users: Vec<f64>,
    pub items: Vec<f64>,
    pub user_counts: Vec<usize>,
    pub item_counts: Vec<usize>,
}

impl PolarityProfile {
    pub fn from_corpus(corpus: &Corpus, lex: &Lexicon) -> Result<Self> {
        let scores: Vec<f64> = corpus
            .interactions
            .iter()
            .map(|i| review_polarity(&i.review, lex))
            .collect();
        let mut per_user = vec![Vec::new(); corpus.num_users()];
        let mut per_item = vec![Vec::new(); corpus.num_items()];
        for (k, &s) in scores.iter().enumerate() {
            per_user[corpus.users[k]].push(s);
            per_item[corpus.items[k]].push(s);
        }
        Ok(PolarityProfile {
            users: per_user.iter().map(|v| entity_polarity(v)).collect::<Result<_>>()?,
            items: per_item.iter().map(|v| entity_polarity(v)).collect::<Result<_>>()?,
            user_counts: per_user.iter().map(Vec::len).collect(),
            item_counts: per_item.iter().map(Vec::len).collect(),
        })
    }
}

/// Entity indices sorted by ascending polarity, ties by index.
fn ascending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order
}

/// Bottom and top tenth of entities by polarity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtremeSets {
    pub negative: Vec<usize>,
    pub positive: Vec<usize>,
}

pub fn extreme_deciles(scores: &[f64]) -> Result<ExtremeSets> {
    let n = scores.len();
    if n < 10 {
        return Err(Error::InsufficientEntities { needed: 10, got: n });
    }
    let order = ascending(scores);
    let m = n / 10;
    Ok(ExtremeSets {
        negative: order[..m].to_vec(),
        positive: order[n - m..].to_vec(),
    })
}

pub const GROUP_LABELS: [&str; 10] = ["N5", "N4", "N3", "N2", "N1", "P1", "P2", "P3", "P4", "P5"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarityGroup {
    pub label: String,
    pub members: Vec<usize>,
}

/// Ten polarity-ordered groups `N5..N1, P1..P5`; sizes differ by at most
/// one and the larger groups come first.
pub fn decile_groups(scores: &[f64]) -> Result<Vec<PolarityGroup>> {
    let n = scores.len();
    if n < 10 {
        return Err(Error::InsufficientEntities { needed: 10, got: n });
    }
    let order = ascending(scores);
    let (base, extra) = (n / 10, n % 10);
    let mut groups = Vec::with_capacity(10);
    let mut start = 0;
    for (g, label) in GROUP_LABELS.iter().enumerate() {
        let size = base + usize::from(g < extra);
        groups.push(PolarityGroup {
            label: label.to_string(),
            members: order[start..start + size].to_vec(),
        });
        start += size;
    }
    Ok(groups)
}
