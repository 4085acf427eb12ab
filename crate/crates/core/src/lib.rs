//! Two-stage retrieval of fact-checking articles for multimodal social-media posts.
//!
//! Stage one ranks the article collection with BM25, optionally expanding the
//! query with text recognised inside the post's images. Stage two re-ranks the
//! top candidates with a multimodal attention network that combines static and
//! contextual token interactions with a visual similarity feature.
//!
//! Module map:
//!
//! * [`corpus`]: records, tokenizer, relevance judgments and splits.
//! * [`store`]: frozen feature tables and their binary file format.
//! * [`bm25`]: inverted index and candidate generation.
//! * [`model`]: the re-ranking network, its variants and checkpoints.
//! * [`train`]: triplet hinge-loss training with Adam and early stopping.
//! * [`eval`]: ranking metrics, re-ranking reports, the leftover-query protocol.
//! * [`pipeline`]: file-level steps shared by the command-line driver.

pub mod bm25;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod exec;
pub mod model;
pub mod pipeline;
pub mod store;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
pub use exec::Exec;
