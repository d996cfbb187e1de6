//! 2-hop distant supervision for relation extraction.
//!
//! Entity pairs that share a pattern in a Web table (topic and subject
//! column, or the same two columns across rows) are *anchors* of each other.
//! The sentences of a pair's anchors form its table-expanded bag, which is
//! combined with the pair's own sentences by a PCNN encoder, per-bag
//! selective attention and a learned gate.
//!
//! Module map:
//! - [`corpus`]: sentences, relation vocabulary, 1-hop bags, splits, stats
//! - [`tables`]: table ingestion, column typing, anchor index, 2-hop bags
//! - [`encoder`]: embeddings and the piecewise-pooled convolution
//! - [`aggregation`]: attention, gated bag fusion, relation scoring
//! - [`training`]: loss, analytic gradients, SGD, checkpoints
//! - [`evaluation`]: held-out ranking, PR curves, AUC, test modes
//! - [`synthgen`]: deterministic synthetic corpora
//! - [`dataset`]: glue that turns files into training/evaluation examples

pub mod aggregation;
pub mod corpus;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod seed;
pub mod synthgen;
pub mod tables;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
