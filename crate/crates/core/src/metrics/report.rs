use serde::{Deserialize, Serialize};

use super::{bleu, cider, meteor_alignment, rouge_l, tokenize, BleuStats, TokenSeq, MAX_ORDER};
use crate::error::{Error, Result};

/// One hypothesis with its references, as read from a JSON-lines file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub id: String,
    pub hypothesis: String,
    pub references: Vec<String>,
}

pub const FLAG_EMPTY_HYPOTHESIS: &str = "empty_hypothesis";
pub const FLAG_EXTRA_REFERENCES: &str = "meteor_first_reference_only";
pub const FLAG_GREEDY_ALIGNMENT: &str = "meteor_greedy_alignment";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentenceScores {
    pub id: String,
    /// BLEU-1..4
    pub bleu: [f64; MAX_ORDER],
    pub meteor: f64,
    pub rouge_l: f64,
    pub cider: f64,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusScores {
    pub pairs: usize,
    /// Corpus BLEU-1..4 from pooled counts.
    pub bleu: [f64; MAX_ORDER],
    /// Sentence mean.
    pub meteor: f64,
    /// Sentence mean.
    pub rouge_l: f64,
    pub cider: f64,
    /// Single-pair corpus: CIDEr is identically zero.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub corpus: CorpusScores,
    pub per_sentence: Vec<SentenceScores>,
}

/// Scores every pair and the corpus. ROUGE-L takes the best reference,
/// METEOR uses the first reference only.
pub fn evaluate_corpus(pairs: &[Pair]) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::param("no pairs"));
    }
    let hyps: Vec<TokenSeq> = pairs.iter().map(|p| tokenize(&p.hypothesis)).collect();
    let refs: Vec<Vec<TokenSeq>> = pairs.iter().map(|p| p.references.iter().map(|r| tokenize(r)).collect()).collect();
    for (p, rs) in pairs.iter().zip(&refs) {
        if rs.is_empty() {
            return Err(Error::param(format!("pair `{}` has no references", p.id)));
        }
        if rs.iter().any(TokenSeq::is_empty) {
            return Err(Error::param(format!("pair `{}` has an empty reference", p.id)));
        }
    }

    let cider = cider(&hyps, &refs)?;
    let mut pooled = BleuStats::default();
    let mut per_sentence = Vec::with_capacity(pairs.len());
    for (i, p) in pairs.iter().enumerate() {
        let (h, rs) = (&hyps[i], &refs[i]);
        let mut flags = Vec::new();
        pooled.merge(&BleuStats::from_pair(h, rs)?);

        let mut b = [0.0; MAX_ORDER];
        for (n, slot) in b.iter_mut().enumerate() {
            let s = bleu(h, rs, n + 1)?;
            if s.degenerate && n == 0 {
                flags.push(FLAG_EMPTY_HYPOTHESIS.to_string());
            }
            *slot = s.value;
        }
        let mut rouge = 0.0f64;
        for r in rs {
            rouge = rouge.max(rouge_l(h, r)?);
        }
        if rs.len() > 1 {
            flags.push(FLAG_EXTRA_REFERENCES.to_string());
        }
        if !meteor_alignment(h, &rs[0]).exact {
            flags.push(FLAG_GREEDY_ALIGNMENT.to_string());
        }
        per_sentence.push(SentenceScores {
            id: p.id.clone(),
            bleu: b,
            meteor: super::meteor(h, &rs[0]),
            rouge_l: rouge,
            cider: cider.per_sentence[i],
            flags,
        });
    }

    let mut bleu_corpus = [0.0; MAX_ORDER];
    for (n, slot) in bleu_corpus.iter_mut().enumerate() {
        *slot = pooled.score(n + 1)?.value;
    }
    let m = per_sentence.len() as f64;
    let corpus = CorpusScores {
        pairs: pairs.len(),
        bleu: bleu_corpus,
        meteor: per_sentence.iter().map(|s| s.meteor).sum::<f64>() / m,
        rouge_l: per_sentence.iter().map(|s| s.rouge_l).sum::<f64>() / m,
        cider: cider.corpus,
        degenerate: cider.degenerate,
    };
    Ok(MetricReport { corpus, per_sentence })
}
