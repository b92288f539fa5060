//! Synthetic multi-view concept retrieval.
//!
//! Each sample has one relevant view (its concept's visual prototype plus
//! small noise) among distractor views built from other concepts with larger
//! noise. The query is the concept's text prototype plus small noise. Visual
//! and text prototypes are independent unit vectors, so the projections must
//! learn to align the two spaces before scoring becomes informative.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{QueryEmbedding, ViewEmbeddings};
use crate::math::Mat64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTaskConfig {
    pub n_views: usize,
    pub d_v: usize,
    pub d_t: usize,
    pub d_e: usize,
    pub n_concepts: usize,
    /// Norm-scale of the noise on relevant views and queries.
    pub noise_sigma: f64,
    /// Norm-scale of the noise on distractor views.
    pub distractor_sigma: f64,
    pub samples_train: usize,
    pub samples_eval: usize,
    pub seed: u64,
}

impl Default for SyntheticTaskConfig {
    fn default() -> Self {
        SyntheticTaskConfig {
            n_views: 6,
            d_v: 48,
            d_t: 48,
            d_e: 32,
            n_concepts: 10,
            noise_sigma: 0.3,
            distractor_sigma: 1.0,
            samples_train: 2000,
            samples_eval: 500,
            seed: 0,
        }
    }
}

impl SyntheticTaskConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("n_views", self.n_views),
            ("d_v", self.d_v),
            ("d_t", self.d_t),
            ("d_e", self.d_e),
            ("n_concepts", self.n_concepts),
            ("samples_train", self.samples_train),
            ("samples_eval", self.samples_eval),
        ];
        if let Some((name, _)) = sizes.iter().find(|s| s.1 == 0) {
            return Err(Error::param(format!("{name} must be positive")));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(self.distractor_sigma > self.noise_sigma && self.distractor_sigma.is_finite()) {
            return Err(Error::param(format!(
                "distractor_sigma ({}) must exceed noise_sigma ({})",
                self.distractor_sigma, self.noise_sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub views: ViewEmbeddings,
    pub query: QueryEmbedding,
    pub label: usize,
    pub relevant_view: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub config: SyntheticTaskConfig,
    pub train: Vec<Sample>,
    pub eval: Vec<Sample>,
    /// `n_concepts x d_v`, unit rows.
    pub visual_concepts: Mat64,
    /// `n_concepts x d_t`, unit rows.
    pub text_concepts: Mat64,
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Result<Mat64> {
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let v = loop {
            let v = gaussian(rng, d, 1.0);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect::<Vec<_>>();
            }
        };
        data.extend(v);
    }
    Mat64::new(n, d, data)
}

/// `row + noise`, with per-coordinate standard deviation `sigma / sqrt(d)` so
/// that the noise norm is about `sigma`.
fn noisy(rng: &mut ChaCha8Rng, row: &[f64], sigma: f64) -> Vec<f64> {
    let scale = sigma / (row.len() as f64).sqrt();
    let noise = gaussian(rng, row.len(), scale);
    row.iter().zip(noise).map(|(a, b)| a + b).collect()
}

fn sample(rng: &mut ChaCha8Rng, cfg: &SyntheticTaskConfig, vis: &Mat64, txt: &Mat64) -> Result<Sample> {
    let label = rng.random_range(0..cfg.n_concepts);
    let relevant_view = rng.random_range(0..cfg.n_views);
    let mut views = Vec::with_capacity(cfg.n_views);
    for i in 0..cfg.n_views {
        if i == relevant_view {
            views.push(noisy(rng, vis.row(label), cfg.noise_sigma));
        } else {
            let other = if cfg.n_concepts == 1 {
                label
            } else {
                let c = rng.random_range(0..cfg.n_concepts - 1);
                if c >= label {
                    c + 1
                } else {
                    c
                }
            };
            views.push(noisy(rng, vis.row(other), cfg.distractor_sigma));
        }
    }
    let query = QueryEmbedding::new(noisy(rng, txt.row(label), cfg.noise_sigma))?;
    Ok(Sample { views: ViewEmbeddings::new(views)?, query, label, relevant_view })
}

/// Concept banks, then training samples, then evaluation samples, all from one
/// seeded stream.
pub fn generate_task(cfg: &SyntheticTaskConfig) -> Result<Task> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let visual_concepts = unit_rows(&mut rng, cfg.n_concepts, cfg.d_v)?;
    let text_concepts = unit_rows(&mut rng, cfg.n_concepts, cfg.d_t)?;
    let train = (0..cfg.samples_train)
        .map(|_| sample(&mut rng, cfg, &visual_concepts, &text_concepts))
        .collect::<Result<Vec<_>>>()?;
    let eval = (0..cfg.samples_eval)
        .map(|_| sample(&mut rng, cfg, &visual_concepts, &text_concepts))
        .collect::<Result<Vec<_>>>()?;
    Ok(Task { config: cfg.clone(), train, eval, visual_concepts, text_concepts })
}
