//! Joint training of the fusion parameters and a linear concept classifier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::task::{Sample, Task};
use crate::error::{Error, Result};
use crate::fusion::{fuse, fuse_with_vjp, init_params_with, FusionOutput, Projection, TgsspParams};
use crate::math::{Mat64, Vec64};
use crate::rank::{argmax, StrategyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { steps: 500, batch: 16, learning_rate: 1e-2, optimizer: Optimizer::adam(), seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch == 0 {
            return Err(Error::param("steps and batch must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Fusion parameters plus an `n_concepts x d_e` linear classifier on the fused vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub fusion: TgsspParams,
    pub classifier: Projection,
}

impl Model {
    /// Fusion weights from `seed`; classifier from an independent stream of the same seed.
    pub fn init(task: &Task, strategy: StrategyConfig, seed: u64) -> Result<Self> {
        let c = &task.config;
        let fusion = init_params_with(c.d_v, c.d_t, c.d_e, seed, strategy)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let a = (6.0 / (c.n_concepts + c.d_e) as f64).sqrt();
        let w = (0..c.n_concepts * c.d_e).map(|_| rng.random_range(-a..a)).collect();
        let classifier = Projection::new(Mat64::new(c.n_concepts, c.d_e, w)?, Vec64::zeros(c.n_concepts)?)?;
        Ok(Model { fusion, classifier })
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.fusion.flatten();
        out.extend_from_slice(self.classifier.weight.as_slice());
        out.extend_from_slice(&self.classifier.bias);
        out
    }

    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        let nf = self.fusion.num_params();
        let nw = self.classifier.weight.as_slice().len();
        if flat.len() != nf + nw + self.classifier.bias.len() {
            return Err(Error::shape("flat model vector has the wrong length"));
        }
        let fusion = self.fusion.with_flat(&flat[..nf])?;
        let (rows, cols) = (self.classifier.weight.rows(), self.classifier.weight.cols());
        let classifier = Projection::new(
            Mat64::new(rows, cols, flat[nf..nf + nw].to_vec())?,
            Vec64::new(flat[nf + nw..].to_vec())?,
        )?;
        Ok(Model { fusion, classifier })
    }

    fn logits(&self, fused: &[f64]) -> Vec<f64> {
        let w = &self.classifier.weight;
        (0..w.rows())
            .map(|r| w.row(r).iter().zip(fused).map(|(a, b)| a * b).sum::<f64>() + self.classifier.bias[r])
            .collect()
    }

    /// Predicted concept and the fusion output for one sample.
    pub fn predict(&self, s: &Sample) -> Result<(usize, FusionOutput)> {
        let out = fuse(&s.views, &s.query, &self.fusion)?;
        Ok((argmax(&self.logits(&out.fused)), out))
    }
}

/// `(-log p_label, p)` with a max-shifted softmax.
fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let sum: f64 = e.iter().sum();
    let loss = sum.ln() - (logits[label] - m);
    (loss, e.into_iter().map(|x| x / sum).collect())
}

/// Cross-entropy of one sample and its gradient in [`Model::flatten`] layout.
pub fn sample_loss_and_grad(model: &Model, s: &Sample) -> Result<(f64, Vec<f64>)> {
    let mut loss = 0.0;
    let mut d_logits = Vec::new();
    let (out, g) = fuse_with_vjp(&s.views, &s.query, &model.fusion, |out| {
        let (l, mut p) = cross_entropy(&model.logits(&out.fused), s.label);
        p[s.label] -= 1.0;
        loss = l;
        let up = model.classifier.weight.matvec_transposed(&p);
        d_logits = p;
        up
    })?;
    let mut flat = g.params.flatten();
    let mut dw = Mat64::from_raw(d_logits.len(), out.fused.len(), vec![0.0; d_logits.len() * out.fused.len()]);
    dw.add_outer(&d_logits, &out.fused, 1.0);
    flat.extend_from_slice(dw.as_slice());
    flat.extend_from_slice(&d_logits);
    Ok((loss, flat))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    /// Mean batch loss over the steps since the previous point.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Model,
    pub loss_curve: Vec<LossPoint>,
}

pub const LOSS_EVERY: usize = 10;

/// Trains a fresh model initialised from `tcfg.seed`.
pub fn train(task: &Task, strategy: &StrategyConfig, tcfg: &TrainConfig) -> Result<TrainOutcome> {
    let model = Model::init(task, *strategy, tcfg.seed)?;
    train_model(task, model, tcfg)
}

/// Minibatch training from a given starting point. Batches are drawn with
/// replacement from a stream seeded by `tcfg.seed`.
pub fn train_model(task: &Task, model: Model, tcfg: &TrainConfig) -> Result<TrainOutcome> {
    tcfg.validate()?;
    model.fusion.strategy.validate(task.config.n_views)?;
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    rng.set_stream(2);
    let mut theta = model.flatten();
    let mut model = model;
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let mut curve = Vec::new();
    let (mut acc, mut acc_n) = (0.0, 0usize);

    for step in 0..tcfg.steps {
        let mut grad = vec![0.0; theta.len()];
        let mut batch_loss = 0.0;
        for _ in 0..tcfg.batch {
            let s = &task.train[rng.random_range(0..task.train.len())];
            // overflowing weights surface as non-finite scores before the loss
            let (l, g) = sample_loss_and_grad(&model, s).map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged { step, loss: f64::NAN },
                e => e,
            })?;
            batch_loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        let scale = 1.0 / tcfg.batch as f64;
        batch_loss *= scale;
        if !batch_loss.is_finite() {
            return Err(Error::Diverged { step, loss: batch_loss });
        }
        acc += batch_loss;
        acc_n += 1;
        if step % LOSS_EVERY == 0 {
            curve.push(LossPoint { step, loss: acc / acc_n as f64 });
            (acc, acc_n) = (0.0, 0);
        }

        let t = (step + 1) as i32;
        for i in 0..theta.len() {
            let g = grad[i] * scale;
            match tcfg.optimizer {
                Optimizer::Sgd => theta[i] -= tcfg.learning_rate * g,
                Optimizer::Adam { beta1, beta2, eps } => {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                    let m_hat = m[i] / (1.0 - beta1.powi(t));
                    let v_hat = v[i] / (1.0 - beta2.powi(t));
                    theta[i] -= tcfg.learning_rate * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Diverged { step, loss: batch_loss });
        }
        model = model.with_flat(&theta).map_err(|_| Error::Diverged { step, loss: batch_loss })?;
    }
    Ok(TrainOutcome { model, loss_curve: curve })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    /// Fraction of samples whose largest pooling weight is on the relevant view.
    pub top_view_hit_rate: f64,
}

pub fn evaluate(samples: &[Sample], model: &Model) -> Result<EvalResult> {
    if samples.is_empty() {
        return Err(Error::param("no samples to evaluate"));
    }
    let (mut correct, mut hits) = (0usize, 0usize);
    for s in samples {
        let (pred, out) = model.predict(s)?;
        correct += usize::from(pred == s.label);
        hits += usize::from(out.weights.argmax() == s.relevant_view);
    }
    let n = samples.len() as f64;
    Ok(EvalResult { accuracy: correct as f64 / n, top_view_hit_rate: hits as f64 / n })
}
