//! Review dataset ingestion: parsing, k-core filtering, vocabulary,
//! train/val/test split and per-entity review documents.

mod corpus;
mod kcore;
mod parse;
mod vocab;

pub use corpus::{split, Corpus, CorpusConfig, CorpusStats, Split};
pub use kcore::{k_core_filter, k_core_mask};
pub use parse::{parse_amazon_jsonl, parse_yelp_reviews, ParseOutcome};
pub use vocab::{Vocab, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

use serde::{Deserialize, Serialize};

/// One (user, item, rating, review) record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: String,
    pub item_id: String,
    /// Star rating in `[1, 5]`, kept as a real.
    pub rating: f64,
    pub review: Vec<String>,
    pub raw_text: String,
    pub timestamp: Option<i64>,
}

/// Lowercases and splits on every run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Great, phone!"), vec!["great", "phone"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("5-star 5star"), vec!["5", "star", "5star"]);
        assert_eq!(tokenize("  ÉTÉ--café "), vec!["été", "café"]);
    }
}
