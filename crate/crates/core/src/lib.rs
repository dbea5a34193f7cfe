//! Stance detection and media-monitoring engine.
//!
//! The crate covers the whole analysis path for topic-specific stance in news
//! text: article ingestion and sentence segmentation ([`corpus`]), keyword
//! lexicon filtering ([`lexicon`]), human annotation and agreement
//! ([`annotation`]), pluggable classifier backends ([`classify`]),
//! evaluation ([`eval`]), diachronic aggregation ([`trends`]) and embedding
//! similarity series ([`similarity`]).

pub mod annotation;
pub mod classify;
pub mod corpus;
pub mod eval;
pub mod fsutil;
pub mod label;
pub mod lexicon;
pub mod retry;
pub mod similarity;
pub mod trends;

pub use label::StanceLabel;
