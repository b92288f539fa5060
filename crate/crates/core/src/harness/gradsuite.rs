//! Finite-difference checks of every exported backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fusion::{fuse, fuse_vjp, init_params_with, QueryEmbedding, TgsspParams, ViewEmbeddings};
use crate::math::{finite_diff_check, finite_diff_check_grouped, refine_forward, GradCheckReport, Vec64};
use crate::rank::{simple_softmax, strategy_vjp, strategy_weights, StrategyConfig, StrategyKind, WeightMode};

pub const VIEW_COUNTS: [usize; 3] = [2, 6, 8];
pub const STEP: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-4;
/// Minimum separation of scores and distance of refine pre-activations from the
/// ReLU kink in sampled instances.
pub const CONDITIONING: f64 = 1e-3;
/// Minimum spread of `upstream · projected view` across views. Below it the
/// objective barely depends on the pooling weights, so every gradient on the
/// score path is small enough to drown in the rounding noise of a central
/// difference at [`STEP`].
pub const SENSITIVITY: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub seeds: usize,
    pub tolerance: f64,
    /// Multiplies every analytic gradient; anything but 1 should fail the suite.
    pub gradient_scale: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { seeds: 20, tolerance: DEFAULT_TOL, gradient_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteEntry {
    pub check: String,
    pub n_views: usize,
    pub seed: u64,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteReport {
    pub tolerance: f64,
    pub step: f64,
    pub seeds: usize,
    pub entries: Vec<SuiteEntry>,
    /// Worst error per `check n=N[ group]` over all seeds.
    pub summary: GradCheckReport,
    pub passed: bool,
}

/// Strategy configurations covered by the suite at `n` views, with labels.
pub fn strategy_cases(n: usize) -> Vec<(String, StrategyConfig)> {
    let mut out = Vec::new();
    for mode in [WeightMode::TopRow, WeightMode::RankDecay] {
        out.push((
            format!("SoftSort[{mode:?}]"),
            StrategyConfig { weight_mode: mode, ..StrategyConfig::new(StrategyKind::SoftSort) },
        ));
        for iters in [10, 50] {
            out.push((
                format!("SinkhornSort[{mode:?},iters={iters}]"),
                StrategyConfig {
                    weight_mode: mode,
                    sinkhorn_iters: iters,
                    ..StrategyConfig::new(StrategyKind::SinkhornSort)
                },
            ));
        }
    }
    let k = n.min(3);
    out.push((format!("TopKSoft[k={k}]"), StrategyConfig { top_k: k, ..StrategyConfig::new(StrategyKind::TopKSoft) }));
    out.push(("SimpleSoftmax".into(), StrategyConfig::new(StrategyKind::SimpleSoftmax)));
    out.push(("HardTop1[surrogate]".into(), StrategyConfig::new(StrategyKind::HardTop1)));
    out.push(("UniformPooling".into(), StrategyConfig::new(StrategyKind::UniformPooling)));
    out
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn separated(s: &[f64]) -> bool {
    let mut sorted = s.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).all(|w| w[1] - w[0] >= CONDITIONING)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rng_for(seed: u64, n: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    rng
}

/// `upstream · weights(s)` against `strategy_vjp`. HardTop1 is checked against
/// its softmax surrogate, whose gradient its backward pass returns.
pub fn check_strategy(cfg: &StrategyConfig, n: usize, seed: u64, opts: &SuiteOptions) -> Result<GradCheckReport> {
    let mut rng = rng_for(seed, n);
    let s = loop {
        let s = uniform(&mut rng, n);
        if separated(&s) {
            break s;
        }
    };
    let up = uniform(&mut rng, n);
    let f = |x: &[f64]| {
        let w = if cfg.kind == StrategyKind::HardTop1 { simple_softmax(x, cfg.tau) } else { strategy_weights(cfg, x) };
        w.map_or(f64::NAN, |w| dot(&w, &up))
    };
    let g = |x: &[f64]| match strategy_vjp(cfg, x, &up) {
        Ok(v) => v.into_iter().map(|d| d * opts.gradient_scale).collect(),
        Err(_) => vec![f64::NAN; x.len()],
    };
    finite_diff_check(f, g, &s, STEP, opts.tolerance)
}

struct FuseInstance {
    params: TgsspParams,
    views: ViewEmbeddings,
    query: QueryEmbedding,
    upstream: Vec<f64>,
}

const FUSE_DIMS: (usize, usize, usize) = (5, 4, 3);

fn fuse_instance(n: usize, seed: u64) -> Result<FuseInstance> {
    let (d_v, d_t, d_e) = FUSE_DIMS;
    let mut rng = rng_for(seed, 100 + n);
    let mut params = init_params_with(d_v, d_t, d_e, seed, StrategyConfig::new(StrategyKind::SoftSort))?;
    params.refine.bias = Vec64::new(uniform(&mut rng, d_v))?;
    params.refine.norm_gain = Vec64::new((0..d_v).map(|_| rng.random_range(0.5..1.5)).collect())?;
    params.refine.norm_bias = Vec64::new(uniform(&mut rng, d_v))?;
    params.vis_proj.bias = Vec64::new(uniform(&mut rng, d_e))?;
    params.txt_proj.bias = Vec64::new(uniform(&mut rng, d_e))?;
    loop {
        let views = ViewEmbeddings::new((0..n).map(|_| uniform(&mut rng, d_v)).collect())?;
        // txt_proj.weight gradients scale with the query coordinates
        let query = QueryEmbedding::new(
            (0..d_t).map(|_| rng.random_range(0.25..1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect(),
        )?;
        let kink_free =
            views.iter().all(|v| refine_forward(v, &params.refine).1.pre.iter().all(|x| x.abs() >= CONDITIONING));
        if !kink_free {
            continue;
        }
        let Ok(out) = fuse(&views, &query, &params) else { continue };
        if !separated(&out.scores) {
            continue;
        }
        let upstream = uniform(&mut rng, d_e);
        let contrib: Vec<f64> = views.iter().map(|v| dot(&project_view(v, &params), &upstream)).collect();
        let spread = contrib.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - contrib.iter().copied().fold(f64::INFINITY, f64::min);
        if spread >= SENSITIVITY {
            return Ok(FuseInstance { params, views, query, upstream });
        }
    }
}

fn project_view(v: &Vec64, params: &TgsspParams) -> Vec<f64> {
    let refined = refine_forward(v, &params.refine).0;
    let p = &params.vis_proj;
    p.weight.matvec(&refined).iter().zip(p.bias.iter()).map(|(a, b)| a + b).collect()
}

/// Every parameter group of `fuse_vjp`, plus views and query, for a
/// well-conditioned random instance.
pub fn check_fusion(n: usize, seed: u64, opts: &SuiteOptions) -> Result<GradCheckReport> {
    let inst = fuse_instance(n, seed)?;
    let (d_v, d_t, _) = FUSE_DIMS;
    let np = inst.params.num_params();
    let mut point = inst.params.flatten();
    point.extend(inst.views.iter().flat_map(|v| v.iter().copied()));
    point.extend_from_slice(inst.query.as_slice());

    let split = |x: &[f64]| -> Result<(TgsspParams, ViewEmbeddings, QueryEmbedding)> {
        let params = inst.params.with_flat(&x[..np])?;
        let views = ViewEmbeddings::new(x[np..np + n * d_v].chunks(d_v).map(<[f64]>::to_vec).collect())?;
        let query = QueryEmbedding::new(x[np + n * d_v..].to_vec())?;
        Ok((params, views, query))
    };
    let f = |x: &[f64]| {
        split(x).and_then(|(p, v, q)| fuse(&v, &q, &p)).map_or(f64::NAN, |out| dot(&out.fused, &inst.upstream))
    };
    let g = |x: &[f64]| {
        let Ok(grads) = split(x).and_then(|(p, v, q)| fuse_vjp(&v, &q, &p, &inst.upstream)) else {
            return vec![f64::NAN; x.len()];
        };
        let mut flat = grads.params.flatten();
        flat.extend(grads.views.into_iter().flatten());
        flat.extend(grads.query);
        flat.into_iter().map(|d| d * opts.gradient_scale).collect()
    };
    let mut groups = inst.params.param_groups();
    groups.push(("views", n * d_v));
    groups.push(("query", d_t));
    finite_diff_check_grouped(f, g, &point, &groups, STEP, opts.tolerance)
}

fn merge_worst(summary: &mut Vec<(String, f64)>, name: String, err: f64) {
    match summary.iter_mut().find(|e| e.0 == name) {
        Some(e) => e.1 = e.1.max(err),
        None => summary.push((name, err)),
    }
}

/// All strategy cases and the full fusion backward pass, for every seed in
/// `0..opts.seeds` and every view count in [`VIEW_COUNTS`].
pub fn grad_check_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    if opts.seeds == 0 {
        return Err(crate::error::Error::param("seed count must be at least 1"));
    }
    let mut entries = Vec::new();
    let mut per_param = Vec::new();
    for &n in &VIEW_COUNTS {
        let cases = strategy_cases(n);
        for seed in 0..opts.seeds as u64 {
            for (label, cfg) in &cases {
                let r = check_strategy(cfg, n, seed, opts)?;
                merge_worst(&mut per_param, format!("{label} n={n}"), r.max_rel_error);
                entries.push(SuiteEntry {
                    check: label.clone(),
                    n_views: n,
                    seed,
                    max_rel_error: r.max_rel_error,
                    passed: r.passed,
                });
            }
            let r = check_fusion(n, seed, opts)?;
            for (group, err) in &r.per_param_errors {
                merge_worst(&mut per_param, format!("fuse_vjp n={n} {group}"), *err);
            }
            entries.push(SuiteEntry {
                check: "fuse_vjp[SoftSort]".into(),
                n_views: n,
                seed,
                max_rel_error: r.max_rel_error,
                passed: r.passed,
            });
        }
    }
    let max_rel_error = entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max);
    let passed = entries.iter().all(|e| e.passed);
    Ok(SuiteReport {
        tolerance: opts.tolerance,
        step: STEP,
        seeds: opts.seeds,
        entries,
        summary: GradCheckReport { max_rel_error, per_param_errors: per_param, tolerance: opts.tolerance, passed },
        passed,
    })
}
