//! Closed-form operation counts for the strategy forward passes.
//!
//! Convention: every scalar addition/subtraction, multiplication, division,
//! exponential and comparison counts as one operation; `abs` and each step of
//! a max scan count as a comparison; negation is free. A full sort of `n`
//! values is charged `ceil(n * log2(n))` comparisons. Counts cover the
//! scores-to-weights path only (pooling is identical across strategies).
//!
//! The counts mirror the kernels in the parent module line by line; the
//! instrumented [`super::strategy_weights_counted`] must agree with them.

use serde::{Deserialize, Serialize};

use super::{StrategyConfig, StrategyKind, WeightMode};
use crate::math::Tally;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlopCount {
    pub additions: u64,
    pub multiplications: u64,
    pub exponentials: u64,
    pub comparisons: u64,
    pub divisions: u64,
    pub total: u64,
}

impl Tally for FlopCount {
    fn add(&mut self, n: u64) {
        self.additions += n;
        self.total += n;
    }

    fn mul(&mut self, n: u64) {
        self.multiplications += n;
        self.total += n;
    }

    fn div(&mut self, n: u64) {
        self.divisions += n;
        self.total += n;
    }

    fn exp(&mut self, n: u64) {
        self.exponentials += n;
        self.total += n;
    }

    fn cmp(&mut self, n: u64) {
        self.comparisons += n;
        self.total += n;
    }
}

/// `ceil(n log2 n)`, zero for `n <= 1`.
pub fn sort_comparisons(n: usize) -> u64 {
    if n <= 1 {
        return 0;
    }
    let n = n as f64;
    (n * n.log2()).ceil() as u64
}

/// Softmax of `m` precomputed logits.
fn softmax(c: &mut FlopCount, m: u64) {
    c.cmp(m - 1);
    c.add(m);
    c.exp(m);
    c.add(m - 1);
    c.div(m);
}

fn cost_row(c: &mut FlopCount, n: u64) {
    c.add(n);
    c.cmp(n);
    c.div(n);
}

fn normalization(c: &mut FlopCount, n: u64) {
    c.add(n * (n - 1));
    c.div(n * n);
}

fn reduction(c: &mut FlopCount, mode: WeightMode, n: u64) {
    if mode == WeightMode::RankDecay {
        c.mul(n - 1);
        c.mul(n * n);
        c.add(n * (n - 1));
        c.add(n - 1);
        c.div(n);
    }
}

/// Operations executed by the forward pass of `cfg` at `n` views.
pub fn flop_count(cfg: &StrategyConfig, n: usize) -> FlopCount {
    let n = n.max(1) as u64;
    let mut c = FlopCount::default();
    match cfg.kind {
        StrategyKind::UniformPooling => c.div(1),
        StrategyKind::HardTop1 => c.cmp(n - 1),
        StrategyKind::SimpleSoftmax => {
            c.div(n);
            softmax(&mut c, n);
        }
        StrategyKind::TopKSoft => {
            // mask test per view, then a full-width softmax over masked logits
            c.cmp(sort_comparisons(n as usize));
            c.cmp(n);
            c.div(n);
            softmax(&mut c, n);
        }
        StrategyKind::SoftSort => match cfg.weight_mode {
            WeightMode::TopRow => {
                c.cmp(n - 1);
                cost_row(&mut c, n);
                softmax(&mut c, n);
            }
            WeightMode::RankDecay => {
                c.cmp(sort_comparisons(n as usize));
                for _ in 0..n {
                    cost_row(&mut c, n);
                    softmax(&mut c, n);
                }
                reduction(&mut c, cfg.weight_mode, n);
            }
        },
        StrategyKind::SinkhornSort => {
            c.cmp(sort_comparisons(n as usize));
            for _ in 0..n {
                cost_row(&mut c, n);
            }
            c.exp(n * n);
            for _ in 0..(2 * cfg.sinkhorn_iters as u64 + 1) {
                normalization(&mut c, n);
            }
            reduction(&mut c, cfg.weight_mode, n);
        }
    }
    c
}
