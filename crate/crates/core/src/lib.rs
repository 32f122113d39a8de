//! Synonym discovery for knowledge-base entities from a linked, parsed corpus.
//!
//! Strings are represented as `(surface, entity)` senses. Each sense gets an
//! embedding trained on three objectives at once: word co-occurrence, a
//! margin ranking of known synonym pairs under a bilinear score, and a
//! logistic classifier over the dependency paths joining co-mentioned
//! strings. Candidates for an entity are ranked by the bilinear score plus a
//! weighted vote of the classifier over their shared sentences.

pub mod corpus;
pub mod distributional;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod inference;
pub mod params;
pub mod patterns;
pub mod pipeline;
pub mod seeds;
pub mod synthetic;
pub mod trainer;
pub mod vocab;

pub use error::{Error, Result};
