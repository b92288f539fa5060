//! Ranking strategies that turn a vector of view-query similarity scores into
//! pooling weights, together with their vector-Jacobian products.
//!
//! Six strategies are provided:
//!
//! | strategy        | forward                                                   | backward                        |
//! |-----------------|-----------------------------------------------------------|---------------------------------|
//! | `SoftSort`      | row-softmax of `-|sorted_r - s_j| / tau`, then reduction  | exact                           |
//! | `SinkhornSort`  | same kernel, alternating row/column normalization          | exact, through the unrolled loop |
//! | `TopKSoft`      | softmax restricted to the `k` largest scores               | exact                           |
//! | `SimpleSoftmax` | `softmax(s / tau)`                                         | exact                           |
//! | `HardTop1`      | one-hot at the argmax                                      | straight-through softmax        |
//! | `UniformPooling`| `1 / n` everywhere                                         | zero                            |
//!
//! Sorting is descending, so rank 0 is the most relevant view. Ties resolve to
//! the lowest index everywhere.

mod flops;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{check_tau, softmax_tallied, softmax_temp_tallied, softmax_temp_vjp, Mat64, NoTally, Tally};

pub use flops::{flop_count, sort_comparisons, FlopCount};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyKind {
    SoftSort,
    SinkhornSort,
    TopKSoft,
    SimpleSoftmax,
    HardTop1,
    UniformPooling,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::SoftSort,
        StrategyKind::SinkhornSort,
        StrategyKind::TopKSoft,
        StrategyKind::SimpleSoftmax,
        StrategyKind::HardTop1,
        StrategyKind::UniformPooling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::SoftSort => "SoftSort",
            StrategyKind::SinkhornSort => "SinkhornSort",
            StrategyKind::TopKSoft => "TopKSoft",
            StrategyKind::SimpleSoftmax => "SimpleSoftmax",
            StrategyKind::HardTop1 => "HardTop1",
            StrategyKind::UniformPooling => "UniformPooling",
        }
    }

    /// Whether the weights depend on the scores through a smooth path.
    pub fn is_differentiable(self) -> bool {
        !matches!(self, StrategyKind::HardTop1)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
        Ok(match key.as_str() {
            "softsort" => StrategyKind::SoftSort,
            "sinkhornsort" | "sinkhorn" => StrategyKind::SinkhornSort,
            "topksoft" | "topk" => StrategyKind::TopKSoft,
            "simplesoftmax" | "softmax" => StrategyKind::SimpleSoftmax,
            "hardtop1" | "top1" | "hard" => StrategyKind::HardTop1,
            "uniformpooling" | "uniform" | "mean" => StrategyKind::UniformPooling,
            _ => return Err(Error::param(format!("unknown strategy {s:?}"))),
        })
    }
}

/// How a relaxed permutation matrix is reduced to one weight per view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightMode {
    /// The soft assignment of rank 0.
    TopRow,
    /// `w_j ∝ Σ_r rank_decay^r · p[r][j]`
    RankDecay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub tau: f64,
    /// Subset size for `TopKSoft`.
    pub top_k: usize,
    pub sinkhorn_iters: usize,
    pub weight_mode: WeightMode,
    /// Only read in `RankDecay` mode.
    pub rank_decay: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            kind: StrategyKind::SoftSort,
            tau: 1.0,
            top_k: 3,
            sinkhorn_iters: 50,
            weight_mode: WeightMode::TopRow,
            rank_decay: 0.5,
        }
    }
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        StrategyConfig { kind, ..Default::default() }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    /// Checks the configuration against `n` views.
    pub fn validate(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::param("need at least one view"));
        }
        check_tau(self.tau)?;
        match self.kind {
            StrategyKind::TopKSoft if self.top_k == 0 || self.top_k > n => {
                Err(Error::param(format!("top_k = {} outside 1..={n}", self.top_k)))
            }
            StrategyKind::SinkhornSort if self.sinkhorn_iters == 0 => {
                Err(Error::param("sinkhorn_iters must be at least 1"))
            }
            StrategyKind::SoftSort | StrategyKind::SinkhornSort => check_mode(self.weight_mode, self.rank_decay),
            _ => Ok(()),
        }
    }
}

fn check_mode(mode: WeightMode, rank_decay: f64) -> Result<()> {
    if mode == WeightMode::RankDecay && !(rank_decay > 0.0 && rank_decay <= 1.0) {
        return Err(Error::param(format!("rank_decay must lie in (0, 1], got {rank_decay}")));
    }
    Ok(())
}

/// Row-stochastic `n x n` matrix; row `r` is the soft assignment of rank `r` over views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedPermutation(Mat64);

impl RelaxedPermutation {
    /// Validates squareness and row-stochasticity (within 1e-9).
    pub fn new(p: Mat64) -> Result<Self> {
        if p.rows() != p.cols() {
            return Err(Error::shape(format!("relaxed permutation must be square, got {}x{}", p.rows(), p.cols())));
        }
        if p.as_slice().iter().any(|&v| v < 0.0) {
            return Err(Error::param("relaxed permutation has negative entries"));
        }
        if let Some((r, s)) = p.row_sums().into_iter().enumerate().find(|(_, s)| (s - 1.0).abs() > 1e-9) {
            return Err(Error::param(format!("row {r} of relaxed permutation sums to {s}")));
        }
        Ok(RelaxedPermutation(p))
    }

    pub fn matrix(&self) -> &Mat64 {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn into_matrix(self) -> Mat64 {
        self.0
    }
}

/// Pooling weights, one per view: nonnegative and summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankWeights(Vec<f64>);

impl RankWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest weight, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

impl std::ops::Deref for RankWeights {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn check_scores(s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::param("score vector is empty"));
    }
    match s.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("score {i} is {}", s[i]))),
        None => Ok(()),
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// View indices ordered by descending score; equal scores keep index order.
pub fn descending_order(s: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    idx
}

/// Logit row `-|d - s_j| / tau` for one sorted value `d`.
fn cost_logits(d: f64, s: &[f64], tau: f64, t: &mut impl Tally) -> Vec<f64> {
    let n = s.len() as u64;
    t.add(n);
    t.cmp(n);
    t.div(n);
    s.iter().map(|&sj| -(d - sj).abs() / tau).collect()
}

/// SoftSort relaxed permutation: `p[r][j] = softmax_j(-|d_r - s_j| / tau)` with
/// `d` the scores sorted in descending order.
pub fn soft_sort(s: &[f64], tau: f64) -> Result<RelaxedPermutation> {
    check_scores(s)?;
    check_tau(tau)?;
    Ok(RelaxedPermutation(soft_sort_tallied(s, tau, &mut NoTally)))
}

fn soft_sort_tallied(s: &[f64], tau: f64, t: &mut impl Tally) -> Mat64 {
    let n = s.len();
    let order = descending_order(s);
    t.cmp(sort_comparisons(n));
    let mut data = Vec::with_capacity(n * n);
    for &idx in &order {
        let logits = cost_logits(s[idx], s, tau, t);
        data.extend(softmax_tallied(&logits, t));
    }
    Mat64::from_raw(n, n, data)
}

/// Row 0 of [`soft_sort`]; only the maximum is needed, not the full sort.
fn soft_sort_top_row_tallied(s: &[f64], tau: f64, t: &mut impl Tally) -> Vec<f64> {
    let top = s[argmax(s)];
    t.cmp(s.len() as u64 - 1);
    let logits = cost_logits(top, s, tau, t);
    softmax_tallied(&logits, t)
}

/// Sinkhorn relaxed permutation: the SoftSort kernel `exp(-|d_r - s_j| / tau)`,
/// row-normalized, then `iters` rounds of column- and row-normalization.
/// Rows sum to one exactly; columns approach one as the iteration converges.
pub fn sinkhorn_sort(s: &[f64], tau: f64, iters: usize) -> Result<RelaxedPermutation> {
    check_scores(s)?;
    check_tau(tau)?;
    if iters == 0 {
        return Err(Error::param("sinkhorn needs at least one iteration"));
    }
    Ok(RelaxedPermutation(sinkhorn_forward(s, tau, iters, &mut NoTally).output()))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Axis {
    Row,
    Col,
}

struct NormStep {
    axis: Axis,
    sums: Vec<f64>,
    out: Mat64,
}

struct SinkhornTrace {
    order: Vec<usize>,
    kernel: Mat64,
    steps: Vec<NormStep>,
}

impl SinkhornTrace {
    fn output(mut self) -> Mat64 {
        self.steps.pop().map(|s| s.out).unwrap_or(self.kernel)
    }

    fn last(&self) -> &Mat64 {
        &self.steps.last().expect("at least one normalization").out
    }
}

fn normalize(m: &Mat64, axis: Axis, t: &mut impl Tally) -> NormStep {
    let n = m.rows();
    let sums = match axis {
        Axis::Row => m.row_sums(),
        Axis::Col => m.col_sums(),
    };
    t.add((n * (n - 1)) as u64);
    t.div((n * n) as u64);
    let mut out = m.clone();
    for r in 0..n {
        for (c, v) in out.row_mut(r).iter_mut().enumerate() {
            *v /= match axis {
                Axis::Row => sums[r],
                Axis::Col => sums[c],
            };
        }
    }
    NormStep { axis, sums, out }
}

fn sinkhorn_forward(s: &[f64], tau: f64, iters: usize, t: &mut impl Tally) -> SinkhornTrace {
    let n = s.len();
    let order = descending_order(s);
    t.cmp(sort_comparisons(n));
    let mut data = Vec::with_capacity(n * n);
    for &idx in &order {
        let logits = cost_logits(s[idx], s, tau, t);
        data.extend(logits.into_iter().map(f64::exp));
    }
    t.exp((n * n) as u64);
    let kernel = Mat64::from_raw(n, n, data);

    let mut steps = Vec::with_capacity(2 * iters + 1);
    steps.push(normalize(&kernel, Axis::Row, t));
    for _ in 0..iters {
        let col = normalize(&steps.last().unwrap().out, Axis::Col, t);
        steps.push(col);
        let row = normalize(&steps.last().unwrap().out, Axis::Row, t);
        steps.push(row);
    }
    SinkhornTrace { order, kernel, steps }
}

/// Softmax over the `k` largest scores (ties to the lowest index), zero elsewhere.
///
/// Implemented as a masked softmax: logits ranked `k` or lower are set to
/// `-inf` before normalization, so unselected views get exactly zero weight.
pub fn topk_soft(s: &[f64], tau: f64, k: usize) -> Result<RankWeights> {
    check_scores(s)?;
    check_tau(tau)?;
    if k == 0 || k > s.len() {
        return Err(Error::param(format!("k = {k} outside 1..={}", s.len())));
    }
    Ok(RankWeights(topk_tallied(s, tau, k, &mut NoTally)))
}

fn topk_tallied(s: &[f64], tau: f64, k: usize, t: &mut impl Tally) -> Vec<f64> {
    let n = s.len();
    let order = descending_order(s);
    t.cmp(sort_comparisons(n));
    let mut rank = vec![0; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let masked: Vec<f64> =
        s.iter().zip(&rank).map(|(&v, &r)| if r < k { v / tau } else { f64::NEG_INFINITY }).collect();
    t.cmp(n as u64);
    t.div(n as u64);
    softmax_tallied(&masked, t)
}

/// `softmax(s / tau)`; no positional modelling.
pub fn simple_softmax(s: &[f64], tau: f64) -> Result<RankWeights> {
    check_scores(s)?;
    check_tau(tau)?;
    Ok(RankWeights(softmax_temp_tallied(s, tau, &mut NoTally)))
}

/// One-hot at the highest score (lowest index on ties).
pub fn hard_top1(s: &[f64]) -> Result<RankWeights> {
    check_scores(s)?;
    Ok(RankWeights(hard_top1_tallied(s, &mut NoTally)))
}

fn hard_top1_tallied(s: &[f64], t: &mut impl Tally) -> Vec<f64> {
    t.cmp(s.len() as u64 - 1);
    let mut w = vec![0.0; s.len()];
    w[argmax(s)] = 1.0;
    w
}

pub fn uniform_weights(n: usize) -> Result<RankWeights> {
    if n == 0 {
        return Err(Error::param("uniform weights need n >= 1"));
    }
    Ok(RankWeights(uniform_tallied(n, &mut NoTally)))
}

fn uniform_tallied(n: usize, t: &mut impl Tally) -> Vec<f64> {
    t.div(1);
    vec![1.0 / n as f64; n]
}

/// Reduces a relaxed permutation to per-view weights.
pub fn weights_from_relaxed_perm(p: &RelaxedPermutation, mode: WeightMode, rank_decay: f64) -> Result<RankWeights> {
    check_mode(mode, rank_decay)?;
    Ok(RankWeights(reduce_tallied(p.matrix(), mode, rank_decay, &mut NoTally)))
}

fn decay_coeffs(n: usize, gamma: f64) -> Vec<f64> {
    let mut c = Vec::with_capacity(n);
    let mut g = 1.0;
    for _ in 0..n {
        c.push(g);
        g *= gamma;
    }
    c
}

fn reduce_tallied(p: &Mat64, mode: WeightMode, gamma: f64, t: &mut impl Tally) -> Vec<f64> {
    let n = p.rows();
    match mode {
        WeightMode::TopRow => p.row(0).to_vec(),
        WeightMode::RankDecay => {
            let coeffs = decay_coeffs(n, gamma);
            t.mul(n as u64 - 1);
            let mut u = vec![0.0; n];
            for (r, &c) in coeffs.iter().enumerate() {
                for (uj, pj) in u.iter_mut().zip(p.row(r)) {
                    *uj += c * pj;
                }
            }
            t.mul((n * n) as u64);
            t.add((n * (n - 1)) as u64);
            let total: f64 = u.iter().sum();
            t.add(n as u64 - 1);
            t.div(n as u64);
            u.into_iter().map(|v| v / total).collect()
        }
    }
}

/// Gradient of the reduction with respect to the matrix entries.
fn reduce_vjp(p: &Mat64, mode: WeightMode, gamma: f64, upstream: &[f64]) -> Mat64 {
    let n = p.rows();
    let mut dp = Mat64::from_raw(n, n, vec![0.0; n * n]);
    match mode {
        WeightMode::TopRow => dp.row_mut(0).copy_from_slice(upstream),
        WeightMode::RankDecay => {
            let coeffs = decay_coeffs(n, gamma);
            let mut u = vec![0.0; n];
            for (r, &c) in coeffs.iter().enumerate() {
                for (uj, pj) in u.iter_mut().zip(p.row(r)) {
                    *uj += c * pj;
                }
            }
            let total: f64 = u.iter().sum();
            let w_dot_g: f64 = u.iter().zip(upstream).map(|(ui, gi)| ui / total * gi).sum();
            let du: Vec<f64> = upstream.iter().map(|g| (g - w_dot_g) / total).collect();
            for (r, &c) in coeffs.iter().enumerate() {
                for (d, g) in dp.row_mut(r).iter_mut().zip(&du) {
                    *d = c * g;
                }
            }
        }
    }
    dp
}

/// Pooling weights for `s` under `cfg`.
pub fn strategy_weights(cfg: &StrategyConfig, s: &[f64]) -> Result<RankWeights> {
    check_scores(s)?;
    cfg.validate(s.len())?;
    Ok(RankWeights(weights_tallied(cfg, s, &mut NoTally)))
}

/// [`strategy_weights`] plus the operations it actually executed.
pub fn strategy_weights_counted(cfg: &StrategyConfig, s: &[f64]) -> Result<(RankWeights, FlopCount)> {
    check_scores(s)?;
    cfg.validate(s.len())?;
    let mut count = FlopCount::default();
    let w = weights_tallied(cfg, s, &mut count);
    Ok((RankWeights(w), count))
}

fn weights_tallied(cfg: &StrategyConfig, s: &[f64], t: &mut impl Tally) -> Vec<f64> {
    match cfg.kind {
        StrategyKind::SoftSort => match cfg.weight_mode {
            WeightMode::TopRow => soft_sort_top_row_tallied(s, cfg.tau, t),
            WeightMode::RankDecay => {
                let p = soft_sort_tallied(s, cfg.tau, t);
                reduce_tallied(&p, cfg.weight_mode, cfg.rank_decay, t)
            }
        },
        StrategyKind::SinkhornSort => {
            let trace = sinkhorn_forward(s, cfg.tau, cfg.sinkhorn_iters, t);
            reduce_tallied(trace.last(), cfg.weight_mode, cfg.rank_decay, t)
        }
        StrategyKind::TopKSoft => topk_tallied(s, cfg.tau, cfg.top_k, t),
        StrategyKind::SimpleSoftmax => softmax_temp_tallied(s, cfg.tau, t),
        StrategyKind::HardTop1 => hard_top1_tallied(s, t),
        StrategyKind::UniformPooling => uniform_tallied(s.len(), t),
    }
}

/// Backward through the shared cost `L[r][j] = -|d_r - s_j| / tau`, where
/// `d_r = s[order[r]]`.
fn cost_vjp(s: &[f64], order: &[usize], tau: f64, d_logits: &Mat64) -> Vec<f64> {
    let n = s.len();
    let mut ds = vec![0.0; n];
    for (r, &idx) in order.iter().enumerate() {
        let d = s[idx];
        let mut dd = 0.0;
        for (j, &g) in d_logits.row(r).iter().enumerate() {
            let sign = match (d - s[j]).partial_cmp(&0.0) {
                Some(std::cmp::Ordering::Greater) => 1.0,
                Some(std::cmp::Ordering::Less) => -1.0,
                _ => 0.0,
            };
            let local = g * sign / tau;
            ds[j] += local;
            dd -= local;
        }
        ds[idx] += dd;
    }
    ds
}

fn soft_sort_vjp(s: &[f64], tau: f64, dp: &Mat64) -> Vec<f64> {
    let p = soft_sort_tallied(s, tau, &mut NoTally);
    let n = s.len();
    let mut d_logits = Mat64::from_raw(n, n, vec![0.0; n * n]);
    for r in 0..n {
        let (pr, gr) = (p.row(r), dp.row(r));
        let inner: f64 = pr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for (dl, (pv, gv)) in d_logits.row_mut(r).iter_mut().zip(pr.iter().zip(gr)) {
            *dl = pv * (gv - inner);
        }
    }
    cost_vjp(s, &descending_order(s), tau, &d_logits)
}

fn sinkhorn_vjp(trace: &SinkhornTrace, s: &[f64], tau: f64, dp: Mat64) -> Vec<f64> {
    let n = s.len();
    let mut grad = dp;
    for step in trace.steps.iter().rev() {
        let y = &step.out;
        let mut dx = Mat64::from_raw(n, n, vec![0.0; n * n]);
        match step.axis {
            Axis::Row => {
                for r in 0..n {
                    let inner: f64 = grad.row(r).iter().zip(y.row(r)).map(|(g, v)| g * v).sum();
                    for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
                        *d = (grad.get(r, c) - inner) / step.sums[r];
                    }
                }
            }
            Axis::Col => {
                let mut inner = vec![0.0; n];
                for r in 0..n {
                    for (c, acc) in inner.iter_mut().enumerate() {
                        *acc += grad.get(r, c) * y.get(r, c);
                    }
                }
                for r in 0..n {
                    for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
                        *d = (grad.get(r, c) - inner[c]) / step.sums[c];
                    }
                }
            }
        }
        grad = dx;
    }
    // K = exp(L)  =>  dL = dK ⊙ K
    let d_logits: Vec<f64> = grad.as_slice().iter().zip(trace.kernel.as_slice()).map(|(g, k)| g * k).collect();
    cost_vjp(s, &trace.order, tau, &Mat64::from_raw(n, n, d_logits))
}

fn topk_vjp(s: &[f64], tau: f64, k: usize, upstream: &[f64]) -> Vec<f64> {
    let order = descending_order(s);
    let selected = &order[..k];
    let sub: Vec<f64> = selected.iter().map(|&i| s[i]).collect();
    let p = softmax_temp_tallied(&sub, tau, &mut NoTally);
    let g: Vec<f64> = selected.iter().map(|&i| upstream[i]).collect();
    let d_sub = softmax_temp_vjp(&p, tau, &g);
    let mut ds = vec![0.0; s.len()];
    for (&i, d) in selected.iter().zip(d_sub) {
        ds[i] = d;
    }
    ds
}

/// `dLoss/ds` given `upstream = dLoss/dweights`.
///
/// `HardTop1` uses the `SimpleSoftmax` gradient at the same temperature as a
/// straight-through surrogate; `UniformPooling` has no dependence on `s`.
pub fn strategy_vjp(cfg: &StrategyConfig, s: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
    check_scores(s)?;
    cfg.validate(s.len())?;
    if upstream.len() != s.len() {
        return Err(Error::shape(format!("upstream has length {}, scores have {}", upstream.len(), s.len())));
    }
    let n = s.len();
    Ok(match cfg.kind {
        StrategyKind::SoftSort => {
            let p = match cfg.weight_mode {
                // the reduction only reads row 0 in this mode
                WeightMode::TopRow => Mat64::from_raw(n, n, vec![0.0; n * n]),
                WeightMode::RankDecay => soft_sort_tallied(s, cfg.tau, &mut NoTally),
            };
            let dp = reduce_vjp(&p, cfg.weight_mode, cfg.rank_decay, upstream);
            soft_sort_vjp(s, cfg.tau, &dp)
        }
        StrategyKind::SinkhornSort => {
            let trace = sinkhorn_forward(s, cfg.tau, cfg.sinkhorn_iters, &mut NoTally);
            let dp = reduce_vjp(trace.last(), cfg.weight_mode, cfg.rank_decay, upstream);
            sinkhorn_vjp(&trace, s, cfg.tau, dp)
        }
        StrategyKind::TopKSoft => topk_vjp(s, cfg.tau, cfg.top_k, upstream),
        StrategyKind::SimpleSoftmax | StrategyKind::HardTop1 => {
            let p = softmax_temp_tallied(s, cfg.tau, &mut NoTally);
            softmax_temp_vjp(&p, cfg.tau, upstream)
        }
        StrategyKind::UniformPooling => vec![0.0; n],
    })
}
