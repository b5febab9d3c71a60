//! Drug-response prioritization toolkit.
//!
//! The crate covers the whole path from curve-level screen summaries to
//! per-cell-line drug rankings:
//!
//! - [`data`]: CSV ingestion, quality filtering, de-duplication, gene-panel
//!   projection and the cancer-aware train/test/fold split.
//! - [`scoring`]: the composite effective score, its tail threshold and labels.
//! - [`neural`]: a small dense-network engine (forward, backprop, SGD with
//!   exponential decay and early stopping).
//! - [`contrastive`]: siamese pretraining of drug and cell-line encoders.
//! - [`classifiers`]: logistic regression, random forest and DNN end
//!   classifiers, feature importance and grid search.
//! - [`evaluation`]: rankings, precision@k, t-tests, Spearman screens and
//!   approved-drug priority summaries.
//! - [`expressiveness`]: cosine cohesion/separation diagnostics and exact t-SNE.
//!
//! All randomness flows through explicitly seeded generators.

pub mod classifiers;
pub mod contrastive;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod expressiveness;
pub mod linalg;
pub mod neural;
pub mod pipeline;
pub mod scoring;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the crate.
pub type Rng = ChaCha8Rng;

/// Seeded generator for a named stream. Distinct `stream` values give
/// independent sequences for the same seed.
pub fn seeded_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
