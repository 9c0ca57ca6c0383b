//! Concept-aware fault detection for deep classifiers.
//!
//! The engine consumes precomputed model outputs, penultimate-layer latents
//! and shared vision-language embeddings, builds per-input features
//! (softmax uncertainty, neighbour support, concept failure ratios), trains a
//! logistic fault detector on the training split and ranks unlabeled test
//! inputs by their likelihood of revealing a fault. Rankings are scored by
//! the number of distinct fault clusters they reach within a labeling budget.

pub mod concepts;
pub mod error;
pub mod evaluation;
pub mod features;
mod linalg;
pub mod lrmodel;
pub mod neighbors;
pub mod pipeline;
pub mod ranking;
pub mod synthgen;
pub mod tensorio;
pub mod uncertainty;

pub use error::{CafdError, Result};
pub use ranking::{Direction, RankedEntry, RankedList};
pub use tensorio::{load_bundle, save_bundle, DatasetBundle, Split};
