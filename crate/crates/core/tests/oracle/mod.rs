//! Slow, independent re-implementations of the text metrics used as test oracles.
//! Everything here works on plain string slices with linear scans and
//! exhaustive enumeration; nothing is shared with the library code.

#![allow(dead_code)]

pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let w: String = raw.to_lowercase();
        let w = w.trim_matches(|c: char| c.is_ascii_punctuation());
        if !w.is_empty() {
            out.push(w.to_string());
        }
    }
    out
}

fn grams(seq: &[String], n: usize) -> Vec<&[String]> {
    if seq.len() < n {
        return Vec::new();
    }
    (0..=seq.len() - n).map(|i| &seq[i..i + n]).collect()
}

fn occurrences(seq: &[String], gram: &[String]) -> usize {
    grams(seq, gram.len()).into_iter().filter(|g| *g == gram).count()
}

fn distinct<'a>(gs: &[&'a [String]]) -> Vec<&'a [String]> {
    let mut out: Vec<&[String]> = Vec::new();
    for g in gs {
        if !out.contains(g) {
            out.push(g);
        }
    }
    out
}

/// `(clipped matches, hypothesis n-grams)` per order 1..=4 and `(l_g, l_r)`.
pub fn bleu_counts(hyp: &[String], refs: &[Vec<String>]) -> ([u64; 4], [u64; 4], u64, u64) {
    let mut matches = [0; 4];
    let mut totals = [0; 4];
    for n in 1..=4 {
        let hg = grams(hyp, n);
        totals[n - 1] = hg.len() as u64;
        for g in distinct(&hg) {
            let in_hyp = occurrences(hyp, g);
            let best_ref = refs.iter().map(|r| occurrences(r, g)).max().unwrap();
            matches[n - 1] += in_hyp.min(best_ref) as u64;
        }
    }
    let mut ref_len = refs[0].len();
    for r in refs {
        let (d, best) = (r.len().abs_diff(hyp.len()), ref_len.abs_diff(hyp.len()));
        if d < best || (d == best && r.len() < ref_len) {
            ref_len = r.len();
        }
    }
    (matches, totals, hyp.len() as u64, ref_len as u64)
}

pub fn bleu_from_counts(matches: &[u64; 4], totals: &[u64; 4], hyp_len: u64, ref_len: u64, max_n: usize) -> f64 {
    if hyp_len == 0 || matches[..max_n].contains(&0) {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 0..max_n {
        log_sum += (matches[n] as f64 / totals[n] as f64).ln() / max_n as f64;
    }
    let brevity = if ref_len > hyp_len { 1.0 - ref_len as f64 / hyp_len as f64 } else { 0.0 };
    (brevity + log_sum).exp()
}

pub fn sentence_bleu(hyp: &[String], refs: &[Vec<String>], max_n: usize) -> f64 {
    let (m, t, h, r) = bleu_counts(hyp, refs);
    bleu_from_counts(&m, &t, h, r, max_n)
}

pub fn corpus_bleu(pairs: &[(Vec<String>, Vec<Vec<String>>)], max_n: usize) -> f64 {
    let (mut m, mut t, mut h, mut r) = ([0; 4], [0; 4], 0, 0);
    for (hyp, refs) in pairs {
        let (pm, pt, ph, pr) = bleu_counts(hyp, refs);
        for n in 0..4 {
            m[n] += pm[n];
            t[n] += pt[n];
        }
        h += ph;
        r += pr;
    }
    bleu_from_counts(&m, &t, h, r, max_n)
}

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|x| it.any(|y| y == *x))
}

/// LCS length by enumerating every subsequence of the shorter side.
pub fn lcs_by_enumeration(a: &[String], b: &[String]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    assert!(short.len() <= 20, "enumeration oracle limited to short inputs");
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let k = mask.count_ones() as usize;
        if k <= best {
            continue;
        }
        let sub: Vec<&String> = (0..short.len()).filter(|i| mask >> i & 1 == 1).map(|i| &short[i]).collect();
        if is_subsequence(&sub, long) {
            best = k;
        }
    }
    best
}

pub fn rouge_l(hyp: &[String], refs: &[Vec<String>]) -> f64 {
    refs.iter().map(|r| lcs_by_enumeration(hyp, r) as f64 / r.len() as f64).fold(0.0, f64::max)
}

fn chunks_of(pairs: &[(usize, usize)]) -> usize {
    let mut sorted = pairs.to_vec();
    sorted.sort();
    let mut chunks = 0;
    for (k, &(i, j)) in sorted.iter().enumerate() {
        if k == 0 || sorted[k - 1] != (i - 1, j.wrapping_sub(1)) {
            chunks += 1;
        }
    }
    chunks
}

fn enumerate_alignments(
    hyp: &[String],
    r: &[String],
    i: usize,
    used: &mut Vec<bool>,
    cur: &mut Vec<(usize, usize)>,
    best: &mut (usize, usize),
) {
    if i == hyp.len() {
        let (m, c) = (cur.len(), chunks_of(cur));
        if m > best.0 || (m == best.0 && c < best.1) {
            *best = (m, c);
        }
        return;
    }
    enumerate_alignments(hyp, r, i + 1, used, cur, best);
    for j in 0..r.len() {
        if !used[j] && r[j] == hyp[i] {
            used[j] = true;
            cur.push((i, j));
            enumerate_alignments(hyp, r, i + 1, used, cur, best);
            cur.pop();
            used[j] = false;
        }
    }
}

/// `(matches, chunks)` of the best alignment over all partial one-to-one maps.
pub fn meteor_alignment(hyp: &[String], r: &[String]) -> (usize, usize) {
    let mut best = (0, 0);
    enumerate_alignments(hyp, r, 0, &mut vec![false; r.len()], &mut Vec::new(), &mut best);
    best
}

pub fn meteor(hyp: &[String], r: &[String]) -> f64 {
    let (m, chunks) = meteor_alignment(hyp, r);
    if m == 0 {
        return 0.0;
    }
    let precision = m as f64 / hyp.len() as f64;
    let recall = m as f64 / r.len() as f64;
    let f = precision * recall / (0.9 * precision + 0.1 * recall);
    let frag = chunks as f64 / m as f64;
    f * (1.0 - 0.5 * frag * frag * frag)
}

/// TF-IDF vector of one sentence as a list of `(gram, weight)`.
fn tfidf(seq: &[String], n: usize, ref_sets: &[Vec<Vec<String>>]) -> Vec<(Vec<String>, f64)> {
    let all = grams(seq, n);
    let m = ref_sets.len() as f64;
    distinct(&all)
        .into_iter()
        .map(|g| {
            let tf = occurrences(seq, g) as f64 / all.len() as f64;
            let df = ref_sets.iter().filter(|set| set.iter().any(|r| occurrences(r, g) > 0)).count();
            (g.to_vec(), tf * (m / df.max(1) as f64).ln())
        })
        .collect()
}

fn cosine(a: &[(Vec<String>, f64)], b: &[(Vec<String>, f64)]) -> f64 {
    let mut dot = 0.0;
    for (ga, wa) in a {
        for (gb, wb) in b {
            if ga == gb {
                dot += wa * wb;
            }
        }
    }
    let na: f64 = a.iter().map(|x| x.1 * x.1).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x.1 * x.1).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Per-sentence CIDEr (x10).
pub fn cider(hyps: &[Vec<String>], ref_sets: &[Vec<Vec<String>>]) -> Vec<f64> {
    hyps.iter()
        .zip(ref_sets)
        .map(|(h, refs)| {
            let mut total = 0.0;
            for n in 1..=4 {
                let vh = tfidf(h, n, ref_sets);
                let mut s = 0.0;
                for r in refs {
                    s += cosine(&vh, &tfidf(r, n, ref_sets));
                }
                total += s / refs.len() as f64;
            }
            10.0 * total / 4.0
        })
        .collect()
}

pub struct Corpus {
    pub ids: Vec<String>,
    pub hyps: Vec<Vec<String>>,
    pub refs: Vec<Vec<Vec<String>>>,
}

/// Parses the JSON-lines test corpus without the library reader.
pub fn load_corpus(text: &str) -> Corpus {
    let mut c = Corpus { ids: Vec::new(), hyps: Vec::new(), refs: Vec::new() };
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        c.ids.push(v["id"].as_str().unwrap().to_string());
        c.hyps.push(words(v["hypothesis"].as_str().unwrap()));
        c.refs.push(v["references"].as_array().unwrap().iter().map(|r| words(r.as_str().unwrap())).collect());
    }
    c
}

pub const MINI_CORPUS: &str = include_str!("../data/mini_corpus.jsonl");
