//! Search engine core for tables extracted from scientific articles.
//!
//! Tables are represented as small structured documents with eight text
//! fields drawn from three levels of context: the enclosing article
//! (title, abstract), the table itself (caption, sentences that refer to
//! it, footnotes), and its cells (row headers, column headers, cell
//! values). The crate provides:
//!
//! - [`corpus`]: the table record model, the XML ingestion format, and a
//!   numeric-content detector used for a quality prior;
//! - [`index`]: tokenization and a positional, field-aware inverted index;
//! - [`ranker`]: a smoothed language-model ranker over structured query
//!   operator trees (windows, weighted combinations, field restriction);
//! - [`query`]: query analysis — entity and noun-phrase concepts, quantity
//!   type classification, and unit expansion;
//! - [`baselines`]: reference rankers (BM25, BM25F, TTF-ITTF vectors) and
//!   bag-of-words / sequential-dependence degenerations of the main model;
//! - [`eval`]: graded relevance judgments, rank metrics, and
//!   cross-validated parameter sweeps.

pub mod baselines;
pub mod corpus;
pub mod eval;
pub mod index;
pub mod params;
pub mod query;
pub mod ranker;
#[cfg(feature = "testsupport")]
pub mod testsupport;

mod error;

pub use error::{Error, Result};
pub use params::{CorpusModel, FieldWeights, ModelParams, SdmWeights, SmoothingParams};
