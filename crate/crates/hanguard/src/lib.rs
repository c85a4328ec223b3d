//! Robust Chinese text classification under character-substitution attacks.
//!
//! The crate covers the full loop:
//!
//! 1. [`chargraph`]: build a character graph whose edges connect
//!    homophones and visually confusable characters.
//! 2. [`embedding`]: turn the graph into dense node vectors with biased
//!    random walks and skip-gram training.
//! 3. [`fusion`]: a small transformer classifier that fuses text features
//!    with the frozen graph embeddings.
//! 4. [`attack`]: black-box substitution attacks (saliency-greedy,
//!    sentence-then-word, random) that query any [`classifier::Classifier`].
//! 5. [`augment`]: curriculum-style adversarial augmentation that harvests
//!    attack intermediates to grow a training set.
//! 6. [`metrics`]: attack-success/modification-rate reporting and
//!    success-vs-budget curves.
//!
//! The `examples/` directory walks through each stage end to end; the
//! `hanguard` binary exposes the same steps as subcommands.

pub mod attack;
pub mod augment;
pub mod chargraph;
pub mod classifier;
pub mod config;
pub mod dataset;
pub mod metrics;
pub mod embedding;
pub mod error;
pub mod fusion;
pub mod nn;

pub use error::{Error, Result};
