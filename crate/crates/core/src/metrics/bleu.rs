use super::{ngram_counts, Scored, TokenSeq};
use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Clipped match counts and lengths for one or more sentences; adds up over a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    pub fn from_pair(hyp: &TokenSeq, refs: &[TokenSeq]) -> Result<Self> {
        if refs.is_empty() {
            return Err(Error::param("BLEU needs at least one reference"));
        }
        let mut s = BleuStats { hyp_len: hyp.len() as u64, ..Default::default() };
        s.ref_len = closest_ref_len(hyp.len(), refs) as u64;
        for n in 1..=MAX_ORDER {
            let h = ngram_counts(hyp, n);
            let ref_counts: Vec<_> = refs.iter().map(|r| ngram_counts(r, n)).collect();
            for (gram, &c) in &h.counts {
                let max_ref = ref_counts.iter().map(|r| r.get(gram)).max().unwrap_or(0);
                s.matches[n - 1] += c.min(max_ref) as u64;
            }
            s.totals[n - 1] = h.total() as u64;
        }
        Ok(s)
    }

    pub fn merge(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// `exp(min(1 - l_r/l_g, 0) + (1/N) Σ log p_n)`, zero if any `p_n` is zero.
    pub fn score(&self, max_n: usize) -> Result<Scored> {
        check_order(max_n)?;
        if self.hyp_len == 0 {
            return Ok(Scored { value: 0.0, degenerate: true });
        }
        let mut log_p = 0.0;
        for n in 0..max_n {
            if self.matches[n] == 0 {
                return Ok(Scored { value: 0.0, degenerate: false });
            }
            log_p += (self.matches[n] as f64 / self.totals[n] as f64).ln();
        }
        let brevity = (1.0 - self.ref_len as f64 / self.hyp_len as f64).min(0.0);
        Ok(Scored { value: (brevity + log_p / max_n as f64).exp(), degenerate: false })
    }
}

fn check_order(max_n: usize) -> Result<()> {
    if !(1..=MAX_ORDER).contains(&max_n) {
        return Err(Error::param(format!("BLEU order must be in 1..={MAX_ORDER}, got {max_n}")));
    }
    Ok(())
}

/// Reference length closest to `hyp_len`, shorter one on ties.
fn closest_ref_len(hyp_len: usize, refs: &[TokenSeq]) -> usize {
    refs.iter().map(TokenSeq::len).min_by_key(|&l| (l.abs_diff(hyp_len), l)).unwrap_or(0)
}

/// Sentence BLEU with uniform weights over orders `1..=max_n`.
pub fn bleu(hyp: &TokenSeq, refs: &[TokenSeq], max_n: usize) -> Result<Scored> {
    check_order(max_n)?;
    BleuStats::from_pair(hyp, refs)?.score(max_n)
}

/// Corpus BLEU from pooled clipped counts and lengths.
pub fn corpus_bleu(pairs: &[(TokenSeq, Vec<TokenSeq>)], max_n: usize) -> Result<Scored> {
    check_order(max_n)?;
    if pairs.is_empty() {
        return Err(Error::param("no pairs"));
    }
    let mut total = BleuStats::default();
    for (h, r) in pairs {
        total.merge(&BleuStats::from_pair(h, r)?);
    }
    total.score(max_n)
}
