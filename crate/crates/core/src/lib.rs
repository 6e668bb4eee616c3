//! Building and scoring citation-parsing benchmarks from JATS-annotated
//! articles.
//!
//! The pipeline pairs each plaintext reference with its `mixed-citation`
//! markup ([`matching`]), asks a backend to annotate the plaintext
//! ([`backends`]), and scores the answer field by field ([`scoring`]).

pub mod backends;
pub mod extraction;
pub mod io;
pub mod jats;
pub mod matching;
pub mod scoring;
pub mod text;

pub use jats::{CitationRecord, Corpus, Field, FieldSet, MarkupTree};
pub use matching::{edit_distance, greedy_match, similarity, SimilarityScore};
