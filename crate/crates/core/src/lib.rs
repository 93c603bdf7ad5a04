//! Structural-block driven convolutional relation extraction.
//!
//! Pipeline: raw SemEval2010/KBP37 relation files plus CoNLL-U parses are
//! aligned into sentence instances; entity-anchored token blocks are
//! detected on the dependency tree; block and entity sequences are encoded
//! with multi-scale convolutions over word embeddings enriched with one-hot
//! dependency and POS tags; inter-block subtract/multiply features feed a
//! softmax relation classifier trained with Adam.

pub mod blocks;
pub mod corpus;
pub mod deptree;
pub mod error;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
