//! Multilingual entity linking by constrained decoding over a trie of
//! entity names.
//!
//! A knowledge base maps language-agnostic entity ids to names in many
//! languages. Every `(language, name)` pair is rendered to a token sequence
//! and inserted into a prefix trie. A scorer assigns next-token
//! probabilities; beam search restricted to the trie yields complete names,
//! which are mapped back to entities and ranked, optionally summing evidence
//! over an entity's names in several languages.

pub mod alias;
pub mod artifact;
pub mod codec;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod kb;
pub mod ranker;
pub mod scorer;
pub mod text;
pub mod trie;

pub use error::{Error, Result};
