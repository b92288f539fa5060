use std::collections::HashMap;

use super::TokenSeq;

pub const ALPHA: f64 = 0.9;
pub const BETA: f64 = 3.0;
pub const GAMMA: f64 = 0.5;

/// Memo entries explored before the exact search gives up and falls back to a
/// greedy alignment. Only reachable with many repeated tokens on both sides.
const MAX_STATES: usize = 1 << 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
    /// False when the search budget ran out and the greedy fallback was used.
    pub exact: bool,
}

struct Search {
    hyp: Vec<Option<usize>>,
    ref_ids: Vec<Option<usize>>,
    need: Vec<usize>,
    /// `left[i][t]`: occurrences of type `t` in `hyp[i..]`
    left: Vec<Vec<usize>>,
    positions: Vec<Vec<usize>>,
    memo: HashMap<(usize, usize, Vec<u64>), i64>,
    aborted: bool,
}

fn bit(mask: &[u64], j: usize) -> bool {
    mask[j / 64] >> (j % 64) & 1 == 1
}

impl Search {
    /// Most continuations (matched pairs `(i, j)`, `(i+1, j+1)`) reachable from
    /// hyp position `i` given the previous match and used reference positions.
    fn best(&mut self, i: usize, prev: Option<usize>, mask: &mut Vec<u64>) -> i64 {
        if i == self.hyp.len() || self.aborted {
            return 0;
        }
        let key = (i, prev.map_or(0, |p| p + 1), mask.clone());
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        if self.memo.len() >= MAX_STATES {
            self.aborted = true;
            return 0;
        }
        let Some(t) = self.hyp[i] else {
            let v = self.best(i + 1, None, mask);
            self.memo.insert(key, v);
            return v;
        };
        let used = self.positions[t].iter().filter(|&&j| bit(mask, j)).count();
        let mut best = i64::MIN;
        if used < self.need[t] {
            for k in 0..self.positions[t].len() {
                let j = self.positions[t][k];
                if bit(mask, j) {
                    continue;
                }
                mask[j / 64] |= 1 << (j % 64);
                let gain = i64::from(prev.is_some_and(|p| p + 1 == j));
                let v = gain + self.best(i + 1, Some(j), mask);
                mask[j / 64] &= !(1 << (j % 64));
                best = best.max(v);
            }
        }
        // skipping is allowed only if later occurrences can still fill the quota
        if self.left[i + 1][t] >= self.need[t] - used {
            best = best.max(self.best(i + 1, None, mask));
        }
        self.memo.insert(key, best);
        best
    }
}

fn greedy(hyp: &[Option<usize>], ref_ids: &[Option<usize>], need: &[usize]) -> (usize, usize) {
    let mut used = vec![false; ref_ids.len()];
    let mut taken = vec![0usize; need.len()];
    let mut prev: Option<usize> = None;
    let (mut m, mut cont) = (0, 0);
    for &h in hyp {
        let Some(t) = h else {
            prev = None;
            continue;
        };
        if taken[t] == need[t] {
            prev = None;
            continue;
        }
        let next = prev.map(|p| p + 1).filter(|&j| j < ref_ids.len() && !used[j] && ref_ids[j] == Some(t));
        let j = next.or_else(|| (0..ref_ids.len()).find(|&j| !used[j] && ref_ids[j] == Some(t)));
        if let Some(j) = j {
            cont += usize::from(next.is_some());
            used[j] = true;
            taken[t] += 1;
            m += 1;
        }
        prev = j;
    }
    (m, m - cont)
}

/// Exact-token alignment with the most matches, then the fewest chunks.
pub fn meteor_alignment(hyp: &TokenSeq, reference: &TokenSeq) -> Alignment {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    for tok in reference.tokens() {
        let next = ids.len();
        ids.entry(tok.as_str()).or_insert(next);
    }
    let types = ids.len();
    let hyp_ids: Vec<Option<usize>> = hyp.tokens().iter().map(|t| ids.get(t.as_str()).copied()).collect();
    let ref_ids: Vec<Option<usize>> = reference.tokens().iter().map(|t| ids.get(t.as_str()).copied()).collect();

    let mut positions = vec![Vec::new(); types];
    for (j, &t) in ref_ids.iter().enumerate() {
        positions[t.expect("every reference token has an id")].push(j);
    }
    let mut left = vec![vec![0usize; types]; hyp_ids.len() + 1];
    for i in (0..hyp_ids.len()).rev() {
        left[i] = left[i + 1].clone();
        if let Some(t) = hyp_ids[i] {
            left[i][t] += 1;
        }
    }
    let need: Vec<usize> = (0..types).map(|t| left[0][t].min(positions[t].len())).collect();
    let matches: usize = need.iter().sum();
    if matches == 0 {
        return Alignment { matches: 0, chunks: 0, exact: true };
    }

    let mut search = Search { hyp: hyp_ids, ref_ids, need, left, positions, memo: HashMap::new(), aborted: false };
    let mut mask = vec![0u64; search.ref_ids.len().div_ceil(64)];
    let cont = search.best(0, None, &mut mask);
    if search.aborted {
        let (m, chunks) = greedy(&search.hyp, &search.ref_ids, &search.need);
        return Alignment { matches: m, chunks, exact: false };
    }
    Alignment { matches, chunks: matches - cont as usize, exact: true }
}

/// `F_mean · (1 - γ (chunks/m)^β)` with `F_mean = PR / (αP + (1-α)R)`.
pub fn meteor(hyp: &TokenSeq, reference: &TokenSeq) -> f64 {
    let a = meteor_alignment(hyp, reference);
    if a.matches == 0 {
        return 0.0;
    }
    let m = a.matches as f64;
    let p = m / hyp.len() as f64;
    let r = m / reference.len() as f64;
    let f_mean = p * r / (ALPHA * p + (1.0 - ALPHA) * r);
    let penalty = GAMMA * (a.chunks as f64 / m).powf(BETA);
    f_mean * (1.0 - penalty)
}
