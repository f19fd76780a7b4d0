//! ELECTRA-style cross-lingual pretraining at desk scale.
//!
//! A small generator fills masked positions of monolingual sentences and
//! concatenated translation pairs; a deeper discriminator learns to spot the
//! replaced tokens. Both are transformer encoders with gated relative
//! position bias, built on a reverse-mode autodiff tape. Toy languages with
//! known word alignments make every stage checkable.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod model;
pub mod objectives;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
