//! Paraphrase task classification toolkit.
//!
//! The crate covers the full pipeline for deciding *which kind* of paraphrase
//! a text pair is: normalization and tokenization, surface similarity metrics,
//! a deterministic POS tagger with n-gram profiles, pluggable sentence
//! embeddings, swap-invariant feature vectors, a from-scratch random forest,
//! evaluation utilities, and corpus ingestion plus annotation-sheet tooling.
//!
//! Everything downstream of a seed is deterministic: training the same data
//! with the same seed produces byte-identical model files regardless of how
//! many threads are used.

pub mod corpus;
pub mod embed;
pub mod eval;
pub mod features;
pub mod forest;
pub mod metrics;
pub mod pos;
pub mod synth;
pub mod text;
pub mod util;

pub use embed::{Embedding, EmbeddingProvider, ProviderConfig};
pub use eval::{ConfusionMatrix, CvReport, EvalSummary};
pub use features::{FeatureSchema, FeatureSet, FeatureVector};
pub use forest::{ForestModel, ForestParams};
pub use metrics::SimilarityScores;
pub use pos::{PosTag, Tagger};
pub use text::{ParaphrasePair, TaskLabel, Taxonomy};
