//! Unsupervised multi-granular acoustic tokenization.
//!
//! The pipeline discovers token inventories at several (states, tokens)
//! granularities with alternating HMM training and decoding, fuses them by
//! boundary voting and topic-model relabeling, trains a multi-target network
//! whose bottleneck layer yields frame features, and retrieves spoken queries
//! with token-level DTW over HMM distance tables.

mod binio;
pub mod corpus;
pub mod error;
pub mod evalviz;
pub mod init;
pub mod labels;
mod math;
pub mod mdnn;
pub mod reinforce;
pub mod retrieval;
pub mod tokenizer;

pub use error::{Error, Result};
pub use labels::{LabelSet, Segment, TokenLabelSequence};
