//! Text-guided soft-rank pooling over multi-view embeddings.
//!
//! The crate is organised bottom-up:
//!
//! * [`math`]: vectors, matrices, the refine block, cosine similarity and a
//!   finite-difference gradient oracle.
//! * [`rank`]: the six ranking strategies (SoftSort, Sinkhorn, top-k softmax,
//!   softmax, hard top-1, uniform) with analytic backward passes and FLOP counts.
//! * [`fusion`]: the refine -> project -> score -> rank -> pool pipeline and
//!   its backward pass.
//! * [`metrics`]: BLEU, METEOR, ROUGE-L and CIDEr.
//! * [`harness`]: synthetic task, training loop, ablation runner, gradient
//!   check suite and report writers.

pub mod error;
pub mod fusion;
pub mod harness;
pub mod math;
pub mod metrics;
pub mod rank;

pub use error::{Error, Result};
