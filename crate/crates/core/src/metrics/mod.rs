//! BLEU-N, METEOR, ROUGE-L and CIDEr over whitespace-tokenized text.
//!
//! All scores live in `[0, 1]` except CIDEr, which is scaled by 10.

mod bleu;
mod cider;
mod meteor;
mod report;
mod rouge;

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

pub use bleu::{bleu, corpus_bleu, BleuStats, MAX_ORDER};
pub use cider::{cider, CiderScores, CIDER_SCALE};
pub use meteor::{meteor, meteor_alignment, Alignment, ALPHA, BETA, GAMMA};
pub use report::{
    evaluate_corpus, CorpusScores, MetricReport, Pair, SentenceScores, FLAG_EMPTY_HYPOTHESIS, FLAG_EXTRA_REFERENCES,
    FLAG_GREEDY_ALIGNMENT,
};
pub use rouge::{lcs_len, rouge_l};

/// Output of [`tokenize`]; may be empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Lowercase, split on whitespace, trim ASCII punctuation, drop empties.
pub fn tokenize(text: &str) -> TokenSeq {
    TokenSeq(
        text.split_whitespace()
            .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
            .filter(|w| !w.is_empty())
            .collect(),
    )
}

/// A score that may be flagged as computed on degenerate input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub value: f64,
    pub degenerate: bool,
}

pub type NGram = Vec<String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramCounts {
    pub n: usize,
    pub counts: BTreeMap<NGram, usize>,
}

impl NGramCounts {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn get(&self, gram: &[String]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }
}

pub fn ngram_counts(seq: &TokenSeq, n: usize) -> NGramCounts {
    let mut counts = BTreeMap::new();
    if n > 0 {
        for w in seq.tokens().windows(n) {
            *counts.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    NGramCounts { n, counts }
}

/// Document frequencies of n-grams (orders 1..=4) over per-pair reference sets.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub doc_count: usize,
    pub doc_freq: BTreeMap<NGram, usize>,
}

impl CorpusStats {
    pub fn from_refs(refs: &[Vec<TokenSeq>]) -> Result<Self> {
        if refs.is_empty() {
            return Err(Error::param("corpus has no reference sets"));
        }
        let mut doc_freq = BTreeMap::new();
        for set in refs {
            let grams: BTreeSet<&[String]> =
                set.iter().flat_map(|r| (1..=MAX_ORDER).flat_map(move |n| r.tokens().windows(n))).collect();
            for g in grams {
                *doc_freq.entry(g.to_vec()).or_insert(0) += 1;
            }
        }
        Ok(CorpusStats { doc_count: refs.len(), doc_freq })
    }

    /// `ln(M / max(1, df))`
    pub fn idf(&self, gram: &[String]) -> f64 {
        let df = self.doc_freq.get(gram).copied().unwrap_or(0).max(1);
        (self.doc_count as f64 / df as f64).ln()
    }
}
