use std::collections::BTreeMap;

use super::{ngram_counts, CorpusStats, NGram, TokenSeq, MAX_ORDER};
use crate::error::{Error, Result};

pub const CIDER_SCALE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CiderScores {
    pub corpus: f64,
    pub per_sentence: Vec<f64>,
    /// Set when the corpus has a single pair, where every IDF is zero.
    pub degenerate: bool,
}

fn tfidf(seq: &TokenSeq, n: usize, stats: &CorpusStats) -> BTreeMap<NGram, f64> {
    let counts = ngram_counts(seq, n);
    let total = counts.total() as f64;
    counts
        .counts
        .into_iter()
        .map(|(g, c)| {
            let w = c as f64 / total * stats.idf(&g);
            (g, w)
        })
        .collect()
}

/// Cosine of sparse nonnegative vectors; zero if either has zero norm.
fn cosine(a: &BTreeMap<NGram, f64>, b: &BTreeMap<NGram, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(g, x)| b.get(g).map(|y| x * y)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// TF-IDF cosine per order 1..=4, averaged over references and orders, times 10.
pub fn cider(hyps: &[TokenSeq], refs: &[Vec<TokenSeq>]) -> Result<CiderScores> {
    if hyps.is_empty() {
        return Err(Error::param("CIDEr needs at least one pair"));
    }
    if hyps.len() != refs.len() {
        return Err(Error::shape(format!("{} hypotheses but {} reference sets", hyps.len(), refs.len())));
    }
    if let Some(i) = refs.iter().position(Vec::is_empty) {
        return Err(Error::param(format!("pair {i} has no references")));
    }
    let stats = CorpusStats::from_refs(refs)?;
    let per_sentence: Vec<f64> = hyps
        .iter()
        .zip(refs)
        .map(|(h, rs)| {
            let mut sum = 0.0;
            for n in 1..=MAX_ORDER {
                let gh = tfidf(h, n, &stats);
                let mean = rs.iter().map(|r| cosine(&gh, &tfidf(r, n, &stats))).sum::<f64>() / rs.len() as f64;
                sum += mean;
            }
            CIDER_SCALE * sum / MAX_ORDER as f64
        })
        .collect();
    let corpus = per_sentence.iter().sum::<f64>() / per_sentence.len() as f64;
    Ok(CiderScores { corpus, per_sentence, degenerate: hyps.len() == 1 })
}
