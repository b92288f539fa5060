//! Text-guided pooling of multi-view embeddings.
//!
//! Pipeline per sample:
//!
//! ```text
//! v_i ──refine──▶ r_i ──vis_proj──▶ v_i' ─┐
//!                                         ├─ cosine ─▶ s ─ strategy ─▶ w ─┐
//! q ─────────────────────txt_proj──▶ t' ──┘                               │
//!                                                fused = Σ_i w_i v_i' ◀───┘
//! ```
//!
//! [`fuse_vjp`] runs the same graph backwards and returns gradients for every
//! trainable parameter as well as for the inputs.

mod snapshot;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{
    cosine_similarity, cosine_vjp, project, refine_backward, refine_forward, AffineBlockGrads, AffineBlockParams,
    Mat64, RefineCache, Vec64,
};
use crate::rank::{strategy_vjp, strategy_weights, RankWeights, StrategyConfig};

pub use snapshot::SNAPSHOT_KEYS;

/// `N_v` view vectors of a common dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEmbeddings {
    views: Vec<Vec64>,
}

impl ViewEmbeddings {
    pub fn new(views: Vec<Vec<f64>>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::param("need at least one view"));
        }
        let dim = views[0].len();
        if let Some(i) = views.iter().position(|v| v.len() != dim) {
            return Err(Error::shape(format!("view {i} has length {}, view 0 has {dim}", views[i].len())));
        }
        let views = views.into_iter().map(Vec64::new).collect::<Result<Vec<_>>>()?;
        Ok(ViewEmbeddings { views })
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn dim(&self) -> usize {
        self.views[0].len()
    }

    pub fn view(&self, i: usize) -> &Vec64 {
        &self.views[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec64> {
        self.views.iter()
    }

    /// Same views with the order given by `perm` (`out[i] = self[perm[i]]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        ViewEmbeddings { views: perm.iter().map(|&i| self.views[i].clone()).collect() }
    }
}

/// Text-side embedding, one vector per query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEmbedding(Vec64);

impl QueryEmbedding {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        Ok(QueryEmbedding(Vec64::new(q)?))
    }

    /// Mean of token-level embeddings.
    pub fn from_tokens(tokens: &[Vec<f64>]) -> Result<Self> {
        let first = tokens.first().ok_or_else(|| Error::param("no tokens to pool"))?;
        let d = first.len();
        let mut mean = vec![0.0; d];
        for (i, t) in tokens.iter().enumerate() {
            if t.len() != d {
                return Err(Error::shape(format!("token {i} has length {}, token 0 has {d}", t.len())));
            }
            for (m, v) in mean.iter_mut().zip(t) {
                *m += v;
            }
        }
        let n = tokens.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Self::new(mean)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * alpha).collect())
    }
}

/// Learned linear map into the shared embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    /// `d_e x d_in`
    pub weight: Mat64,
    pub bias: Vec64,
}

impl Projection {
    pub fn new(weight: Mat64, bias: Vec64) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::shape(format!(
                "projection bias has length {}, weight has {} rows",
                bias.len(),
                weight.rows()
            )));
        }
        Ok(Projection { weight, bias })
    }

    pub fn d_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn d_out(&self) -> usize {
        self.weight.rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TgsspParams {
    /// `d_v -> d_v`
    pub refine: AffineBlockParams,
    /// `d_v -> d_e`
    pub vis_proj: Projection,
    /// `d_t -> d_e`
    pub txt_proj: Projection,
    pub strategy: StrategyConfig,
}

/// Embedding dimensions of a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d_v: usize,
    pub d_t: usize,
    pub d_e: usize,
}

impl TgsspParams {
    pub fn dims(&self) -> Dims {
        Dims { d_v: self.refine.d_in(), d_t: self.txt_proj.d_in(), d_e: self.vis_proj.d_out() }
    }

    pub fn validate(&self) -> Result<()> {
        self.refine.validate()?;
        let Dims { d_v, d_e, .. } = self.dims();
        if self.refine.d_out() != d_v {
            return Err(Error::shape(format!("refine block maps {d_v} -> {}, expected square", self.refine.d_out())));
        }
        if self.vis_proj.d_in() != d_v {
            return Err(Error::shape(format!("vis_proj expects {} inputs, views have {d_v}", self.vis_proj.d_in())));
        }
        if self.txt_proj.d_out() != d_e {
            return Err(Error::shape(format!("txt_proj maps to {}, vis_proj maps to {d_e}", self.txt_proj.d_out())));
        }
        if self.vis_proj.bias.len() != d_e || self.txt_proj.bias.len() != d_e {
            return Err(Error::shape("projection bias length differs from d_e"));
        }
        Ok(())
    }

    /// Named parameter groups in [`Self::flatten`] order.
    pub fn param_groups(&self) -> Vec<(&'static str, usize)> {
        let Dims { d_v, d_t, d_e } = self.dims();
        vec![
            ("refine.weight", d_v * d_v),
            ("refine.bias", d_v),
            ("refine.norm_gain", d_v),
            ("refine.norm_bias", d_v),
            ("vis_proj.weight", d_e * d_v),
            ("vis_proj.bias", d_e),
            ("txt_proj.weight", d_e * d_t),
            ("txt_proj.bias", d_e),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.param_groups().iter().map(|g| g.1).sum()
    }

    /// All trainable values concatenated in [`Self::param_groups`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend_from_slice(self.refine.weight.as_slice());
        out.extend_from_slice(&self.refine.bias);
        out.extend_from_slice(&self.refine.norm_gain);
        out.extend_from_slice(&self.refine.norm_bias);
        out.extend_from_slice(self.vis_proj.weight.as_slice());
        out.extend_from_slice(&self.vis_proj.bias);
        out.extend_from_slice(self.txt_proj.weight.as_slice());
        out.extend_from_slice(&self.txt_proj.bias);
        out
    }

    /// A copy with trainable values replaced by `flat` (same layout as [`Self::flatten`]).
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(format!("expected {} parameters, got {}", self.num_params(), flat.len())));
        }
        let mut out = self.clone();
        let mut rest = flat;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        take(out.refine.weight.as_mut_slice());
        take(out.refine.bias.as_mut_slice());
        take(out.refine.norm_gain.as_mut_slice());
        take(out.refine.norm_bias.as_mut_slice());
        take(out.vis_proj.weight.as_mut_slice());
        take(out.vis_proj.bias.as_mut_slice());
        take(out.txt_proj.weight.as_mut_slice());
        take(out.txt_proj.bias.as_mut_slice());
        if let Some(i) = flat.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i} is {}", flat[i])));
        }
        Ok(out)
    }
}

/// Gradients with the same shapes as [`TgsspParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct TgsspGrads {
    pub refine: AffineBlockGrads,
    pub vis_weight: Mat64,
    pub vis_bias: Vec<f64>,
    pub txt_weight: Mat64,
    pub txt_bias: Vec<f64>,
}

impl TgsspGrads {
    fn zeros_like(p: &TgsspParams) -> Self {
        let Dims { d_v, d_t, d_e } = p.dims();
        TgsspGrads {
            refine: AffineBlockGrads::zeros_like(&p.refine),
            vis_weight: Mat64::from_raw(d_e, d_v, vec![0.0; d_e * d_v]),
            vis_bias: vec![0.0; d_e],
            txt_weight: Mat64::from_raw(d_e, d_t, vec![0.0; d_e * d_t]),
            txt_bias: vec![0.0; d_e],
        }
    }

    /// Concatenated in [`TgsspParams::flatten`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(self.refine.weight.as_slice());
        out.extend_from_slice(&self.refine.bias);
        out.extend_from_slice(&self.refine.norm_gain);
        out.extend_from_slice(&self.refine.norm_bias);
        out.extend_from_slice(self.vis_weight.as_slice());
        out.extend_from_slice(&self.vis_bias);
        out.extend_from_slice(self.txt_weight.as_slice());
        out.extend_from_slice(&self.txt_bias);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionOutput {
    /// `Σ_i weights_i · v_i'`, in the shared embedding space.
    pub fused: Vec64,
    pub weights: RankWeights,
    pub scores: Vec<f64>,
}

/// Gradients returned by [`fuse_vjp`].
#[derive(Debug, Clone, PartialEq)]
pub struct FusionGrads {
    pub params: TgsspGrads,
    pub views: Vec<Vec<f64>>,
    pub query: Vec<f64>,
}

/// Cosine of every projected view against the projected query.
pub fn similarity_scores<V: AsRef<[f64]>>(v_proj: &[V], t_proj: &[f64]) -> Result<Vec<f64>> {
    v_proj
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let v = v.as_ref();
            if v.len() != t_proj.len() {
                return Err(Error::shape(format!(
                    "projected view {i} has length {}, query has {}",
                    v.len(),
                    t_proj.len()
                )));
            }
            if v.iter().all(|&x| x == 0.0) {
                return Err(Error::ZeroNorm { index: Some(i) });
            }
            cosine_similarity(v, t_proj)
        })
        .collect()
}

struct Forward {
    refine: Vec<RefineCache>,
    refined: Vec<Vec<f64>>,
    v_proj: Vec<Vec<f64>>,
    t_proj: Vec<f64>,
    output: FusionOutput,
}

fn check_inputs(views: &ViewEmbeddings, query: &QueryEmbedding, params: &TgsspParams) -> Result<()> {
    params.validate()?;
    let Dims { d_v, d_t, .. } = params.dims();
    if views.dim() != d_v {
        return Err(Error::shape(format!("views have dimension {}, params expect {d_v}", views.dim())));
    }
    if query.as_slice().len() != d_t {
        return Err(Error::shape(format!("query has dimension {}, params expect {d_t}", query.as_slice().len())));
    }
    params.strategy.validate(views.n_views())
}

fn forward(views: &ViewEmbeddings, query: &QueryEmbedding, params: &TgsspParams) -> Result<Forward> {
    check_inputs(views, query, params)?;
    let mut refine = Vec::with_capacity(views.n_views());
    let mut refined = Vec::with_capacity(views.n_views());
    let mut v_proj = Vec::with_capacity(views.n_views());
    for v in views.iter() {
        let (r, cache) = refine_forward(v, &params.refine);
        v_proj.push(project(&r, &params.vis_proj.weight, &params.vis_proj.bias));
        refined.push(r);
        refine.push(cache);
    }
    let t_proj = project(query.as_slice(), &params.txt_proj.weight, &params.txt_proj.bias);
    if t_proj.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroNorm { index: None });
    }
    let scores = similarity_scores(&v_proj, &t_proj)?;
    let weights = strategy_weights(&params.strategy, &scores)?;

    let mut fused = vec![0.0; t_proj.len()];
    for (w, v) in weights.iter().zip(&v_proj) {
        for (f, x) in fused.iter_mut().zip(v) {
            *f += w * x;
        }
    }
    let output = FusionOutput { fused: Vec64::new(fused)?, weights, scores };
    Ok(Forward { refine, refined, v_proj, t_proj, output })
}

/// Refine, project, score and pool the views of one sample.
pub fn fuse(views: &ViewEmbeddings, query: &QueryEmbedding, params: &TgsspParams) -> Result<FusionOutput> {
    forward(views, query, params).map(|f| f.output)
}

/// Backward pass of [`fuse`] for `upstream = dLoss/dfused`.
pub fn fuse_vjp(
    views: &ViewEmbeddings,
    query: &QueryEmbedding,
    params: &TgsspParams,
    upstream: &[f64],
) -> Result<FusionGrads> {
    let fwd = forward(views, query, params)?;
    fuse_vjp_from(&fwd, query, params, upstream)
}

/// Forward and backward in one pass; returns the forward output as well.
pub fn fuse_with_vjp<F>(
    views: &ViewEmbeddings,
    query: &QueryEmbedding,
    params: &TgsspParams,
    upstream_of: F,
) -> Result<(FusionOutput, FusionGrads)>
where
    F: FnOnce(&FusionOutput) -> Vec<f64>,
{
    let fwd = forward(views, query, params)?;
    let upstream = upstream_of(&fwd.output);
    let grads = fuse_vjp_from(&fwd, query, params, &upstream)?;
    Ok((fwd.output, grads))
}

fn fuse_vjp_from(fwd: &Forward, query: &QueryEmbedding, params: &TgsspParams, upstream: &[f64]) -> Result<FusionGrads> {
    let d_e = fwd.t_proj.len();
    if upstream.len() != d_e {
        return Err(Error::shape(format!("upstream has length {}, fused has {d_e}", upstream.len())));
    }
    let weights = &fwd.output.weights;
    let n = fwd.v_proj.len();

    // pooling
    let mut d_vproj: Vec<Vec<f64>> = weights.iter().map(|w| upstream.iter().map(|g| w * g).collect()).collect();
    let d_weights: Vec<f64> = fwd.v_proj.iter().map(|v| v.iter().zip(upstream).map(|(a, b)| a * b).sum()).collect();

    // strategy and cosine scores
    let d_scores = strategy_vjp(&params.strategy, &fwd.output.scores, &d_weights)?;
    let mut d_tproj = vec![0.0; d_e];
    for i in 0..n {
        if d_scores[i] == 0.0 {
            continue;
        }
        let (dv, dt) = cosine_vjp(&fwd.v_proj[i], &fwd.t_proj, d_scores[i]);
        for (a, b) in d_vproj[i].iter_mut().zip(dv) {
            *a += b;
        }
        for (a, b) in d_tproj.iter_mut().zip(dt) {
            *a += b;
        }
    }

    let mut grads = TgsspGrads::zeros_like(params);

    // visual branch: projection then refine block
    let mut d_views = Vec::with_capacity(n);
    for ((dv, refined), cache) in d_vproj.iter().zip(&fwd.refined).zip(&fwd.refine) {
        grads.vis_weight.add_outer(dv, refined, 1.0);
        for (b, g) in grads.vis_bias.iter_mut().zip(dv) {
            *b += g;
        }
        let d_refined = params.vis_proj.weight.matvec_transposed(dv);
        d_views.push(refine_backward(&params.refine, cache, &d_refined, &mut grads.refine));
    }

    // text branch
    grads.txt_weight.add_outer(&d_tproj, query.as_slice(), 1.0);
    grads.txt_bias.copy_from_slice(&d_tproj);
    let d_query = params.txt_proj.weight.matvec_transposed(&d_tproj);

    Ok(FusionGrads { params: grads, views: d_views, query: d_query })
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Result<Mat64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Mat64::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-a..a)).collect())
}

/// Xavier-uniform weights, zero biases, unit gains; deterministic in `seed`.
pub fn init_params(d_v: usize, d_t: usize, d_e: usize, seed: u64) -> Result<TgsspParams> {
    init_params_with(d_v, d_t, d_e, seed, StrategyConfig::default())
}

pub fn init_params_with(
    d_v: usize,
    d_t: usize,
    d_e: usize,
    seed: u64,
    strategy: StrategyConfig,
) -> Result<TgsspParams> {
    if d_v == 0 || d_t == 0 || d_e == 0 {
        return Err(Error::param(format!("dims must be positive, got d_v={d_v} d_t={d_t} d_e={d_e}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let refine = AffineBlockParams::new(
        xavier(&mut rng, d_v, d_v)?,
        Vec64::zeros(d_v)?,
        Vec64::filled(d_v, 1.0)?,
        Vec64::zeros(d_v)?,
    )?;
    let vis_proj = Projection::new(xavier(&mut rng, d_e, d_v)?, Vec64::zeros(d_e)?)?;
    let txt_proj = Projection::new(xavier(&mut rng, d_e, d_t)?, Vec64::zeros(d_e)?)?;
    Ok(TgsspParams { refine, vis_proj, txt_proj, strategy })
}

#[cfg(test)]
mod tests;
