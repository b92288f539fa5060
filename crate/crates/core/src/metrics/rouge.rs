use super::TokenSeq;
use crate::error::{Error, Result};

/// Longest common subsequence length by the standard two-row DP.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Recall form: `LCS(hyp, ref) / |ref|`.
pub fn rouge_l(hyp: &TokenSeq, reference: &TokenSeq) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::param("ROUGE-L reference is empty"));
    }
    Ok(lcs_len(hyp.tokens(), reference.tokens()) as f64 / reference.len() as f64)
}
