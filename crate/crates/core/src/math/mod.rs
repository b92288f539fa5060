//! Dense `f64` primitives shared by the ranking and fusion code: vectors and
//! matrices with checked construction, cosine similarity, tempered softmax,
//! the refine block (affine map, per-feature standardization, ReLU) and the
//! finite-difference gradient oracle.
//!
//! Every kernel here has a hand-written backward pass next to it; there is no
//! autodiff engine.

mod gradcheck;

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gradcheck::{finite_diff_check, finite_diff_check_grouped, relative_error, GradCheckReport};

/// Variance is floored at this value before the square root in the refine block.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// A non-empty vector of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vec64(Vec<f64>);

impl Vec64 {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::param("vector must have at least one entry"));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("vector entry {i} is {}", data[i])));
        }
        Ok(Vec64(data))
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; len])
    }

    /// Wraps data produced by an internal kernel from finite inputs.
    pub(crate) fn from_raw(data: Vec<f64>) -> Self {
        debug_assert!(!data.is_empty());
        Vec64(data)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Vec64 {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Vec64 {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Vec64 {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Vec64::new(value)
    }
}

impl From<Vec64> for Vec<f64> {
    fn from(v: Vec64) -> Self {
        v.0
    }
}

/// Row-major dense matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat64 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat64 {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::param(format!("matrix dims must be positive, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("matrix entry ({}, {}) is {}", i / cols, i % cols, data[i])));
        }
        Ok(Mat64 { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Mat64 { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(r)) {
                *s += v;
            }
        }
        sums
    }

    /// `self · x`; caller checks `x.len() == cols`.
    pub(crate) fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `selfᵀ · y`; caller checks `y.len() == rows`.
    pub(crate) fn matvec_transposed(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
        out
    }

    /// `self += scale · u vᵀ`
    pub(crate) fn add_outer(&mut self, u: &[f64], v: &[f64], scale: f64) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for (r, &ur) in u.iter().enumerate() {
            let a = scale * ur;
            if a == 0.0 {
                continue;
            }
            for (m, vc) in self.row_mut(r).iter_mut().zip(v) {
                *m += a * vc;
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_finite(x: &[f64], what: &str) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("{what}[{i}] = {}", x[i]))),
        None => Ok(()),
    }
}

/// Operation counter threaded through the forward kernels that FLOP accounting
/// cares about. Counting convention: one unit per scalar add/sub, mul, div,
/// exp and comparison (including `abs` and max scans); negation is free.
pub(crate) trait Tally {
    fn add(&mut self, _n: u64) {}
    fn mul(&mut self, _n: u64) {}
    fn div(&mut self, _n: u64) {}
    fn exp(&mut self, _n: u64) {}
    fn cmp(&mut self, _n: u64) {}
}

pub(crate) struct NoTally;

impl Tally for NoTally {}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("cosine of lengths {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::param("cosine of empty vectors"));
    }
    let (na, nb) = (norm2(a), norm2(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm { index: None });
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Gradients of `cos(a, b)` with respect to `a` and `b`, each scaled by `upstream`.
/// Both norms must be nonzero.
pub(crate) fn cosine_vjp(a: &[f64], b: &[f64], upstream: f64) -> (Vec<f64>, Vec<f64>) {
    let (na, nb) = (norm2(a), norm2(b));
    let inv = 1.0 / (na * nb);
    let s = dot(a, b) * inv;
    let (ka, kb) = (s / (na * na), s / (nb * nb));
    let da = a.iter().zip(b).map(|(&x, &y)| upstream * (y * inv - ka * x)).collect();
    let db = a.iter().zip(b).map(|(&x, &y)| upstream * (x * inv - kb * y)).collect();
    (da, db)
}

/// `softmax(s / tau)`, stabilised by subtracting the max logit.
pub fn softmax_temp(s: &[f64], tau: f64) -> Result<Vec64> {
    check_tau(tau)?;
    if s.is_empty() {
        return Err(Error::param("softmax of empty vector"));
    }
    check_finite(s, "scores")?;
    Ok(Vec64::from_raw(softmax_temp_tallied(s, tau, &mut NoTally)))
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("temperature must be positive and finite, got {tau}")))
    }
}

pub(crate) fn softmax_temp_tallied(s: &[f64], tau: f64, t: &mut impl Tally) -> Vec<f64> {
    let logits: Vec<f64> = s.iter().map(|v| v / tau).collect();
    t.div(s.len() as u64);
    softmax_tallied(&logits, t)
}

/// Plain softmax of already-scaled logits.
pub(crate) fn softmax_tallied(logits: &[f64], t: &mut impl Tally) -> Vec<f64> {
    let n = logits.len() as u64;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    t.cmp(n - 1);
    let mut out: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    t.add(n);
    t.exp(n);
    let sum: f64 = out.iter().sum();
    t.add(n - 1);
    for o in &mut out {
        *o /= sum;
    }
    t.div(n);
    out
}

/// Vector-Jacobian product of `p = softmax(s / tau)` given its output `p`.
pub fn softmax_temp_vjp(p: &[f64], tau: f64, upstream: &[f64]) -> Vec<f64> {
    let inner = dot(p, upstream);
    p.iter().zip(upstream).map(|(&pi, &gi)| pi * (gi - inner) / tau).collect()
}

/// `w · x + b`
pub fn linear_project(x: &[f64], w: &Mat64, b: &[f64]) -> Result<Vec64> {
    if x.len() != w.cols() {
        return Err(Error::shape(format!("projection expects input of length {}, got {}", w.cols(), x.len())));
    }
    if b.len() != w.rows() {
        return Err(Error::shape(format!("projection bias has length {}, weight has {} rows", b.len(), w.rows())));
    }
    check_finite(x, "x")?;
    Ok(Vec64::from_raw(project(x, w, b)))
}

pub(crate) fn project(x: &[f64], w: &Mat64, b: &[f64]) -> Vec<f64> {
    let mut y = w.matvec(x);
    for (yi, bi) in y.iter_mut().zip(b) {
        *yi += bi;
    }
    y
}

/// Parameters of the refine block: affine map, then per-feature
/// standardization with learnable gain and shift, then ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineBlockParams {
    /// `d_out x d_in`
    pub weight: Mat64,
    pub bias: Vec64,
    pub norm_gain: Vec64,
    pub norm_bias: Vec64,
}

impl AffineBlockParams {
    pub fn new(weight: Mat64, bias: Vec64, norm_gain: Vec64, norm_bias: Vec64) -> Result<Self> {
        let p = AffineBlockParams { weight, bias, norm_gain, norm_bias };
        p.validate()?;
        Ok(p)
    }

    /// Identity weight, zero biases, unit gain.
    pub fn identity(d: usize) -> Result<Self> {
        Self::new(Mat64::identity(d)?, Vec64::zeros(d)?, Vec64::filled(d, 1.0)?, Vec64::zeros(d)?)
    }

    pub fn d_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn d_out(&self) -> usize {
        self.weight.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.weight.rows();
        for (name, len) in
            [("bias", self.bias.len()), ("norm_gain", self.norm_gain.len()), ("norm_bias", self.norm_bias.len())]
        {
            if len != d {
                return Err(Error::shape(format!("refine {name} has length {len}, expected {d}")));
            }
        }
        Ok(())
    }
}

/// Gradient of a loss with respect to [`AffineBlockParams`], same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBlockGrads {
    pub weight: Mat64,
    pub bias: Vec<f64>,
    pub norm_gain: Vec<f64>,
    pub norm_bias: Vec<f64>,
}

impl AffineBlockGrads {
    pub(crate) fn zeros_like(p: &AffineBlockParams) -> Self {
        let d = p.d_out();
        AffineBlockGrads {
            weight: Mat64::from_raw(d, p.d_in(), vec![0.0; d * p.d_in()]),
            bias: vec![0.0; d],
            norm_gain: vec![0.0; d],
            norm_bias: vec![0.0; d],
        }
    }
}

/// Intermediate values of one refine forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct RefineCache {
    pub x: Vec<f64>,
    pub z_hat: Vec<f64>,
    /// Pre-activation `gain * z_hat + norm_bias`.
    pub pre: Vec<f64>,
    pub sigma: f64,
    pub floored: bool,
}

/// `ReLU(norm_gain ⊙ standardize(weight · x + bias) + norm_bias)`
pub fn affine_refine(x: &[f64], p: &AffineBlockParams) -> Result<Vec64> {
    p.validate()?;
    if x.len() != p.d_in() {
        return Err(Error::shape(format!("refine block expects input of length {}, got {}", p.d_in(), x.len())));
    }
    check_finite(x, "x")?;
    Ok(Vec64::from_raw(refine_forward(x, p).0))
}

pub(crate) fn refine_forward(x: &[f64], p: &AffineBlockParams) -> (Vec<f64>, RefineCache) {
    let z = project(x, &p.weight, &p.bias);
    let d = z.len() as f64;
    let mean = z.iter().sum::<f64>() / d;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let floored = var < VARIANCE_FLOOR;
    let sigma = var.max(VARIANCE_FLOOR).sqrt();
    let z_hat: Vec<f64> = z.iter().map(|v| (v - mean) / sigma).collect();
    let pre: Vec<f64> =
        z_hat.iter().zip(p.norm_gain.iter().zip(p.norm_bias.iter())).map(|(zh, (g, b))| g * zh + b).collect();
    let out = pre.iter().map(|v| v.max(0.0)).collect();
    (out, RefineCache { x: x.to_vec(), z_hat, pre, sigma, floored })
}

/// Accumulates parameter gradients into `grads` and returns the input gradient.
pub(crate) fn refine_backward(
    p: &AffineBlockParams,
    cache: &RefineCache,
    upstream: &[f64],
    grads: &mut AffineBlockGrads,
) -> Vec<f64> {
    let d = upstream.len();
    let mut d_zhat = vec![0.0; d];
    for i in 0..d {
        let dy = if cache.pre[i] > 0.0 { upstream[i] } else { 0.0 };
        grads.norm_bias[i] += dy;
        grads.norm_gain[i] += dy * cache.z_hat[i];
        d_zhat[i] = dy * p.norm_gain[i];
    }
    let df = d as f64;
    let mean_dzh = d_zhat.iter().sum::<f64>() / df;
    let dz: Vec<f64> = if cache.floored {
        // sigma is a constant once the floor is active
        d_zhat.iter().map(|g| (g - mean_dzh) / cache.sigma).collect()
    } else {
        let mean_dzh_zh = dot(&d_zhat, &cache.z_hat) / df;
        d_zhat.iter().zip(&cache.z_hat).map(|(g, zh)| (g - mean_dzh - zh * mean_dzh_zh) / cache.sigma).collect()
    };
    for (b, g) in grads.bias.iter_mut().zip(&dz) {
        *b += g;
    }
    grads.weight.add_outer(&dz, &cache.x, 1.0);
    p.weight.matvec_transposed(&dz)
}
