//! Zero-shot text-to-image retrieval with caption ensembles, and the
//! scoring rules of a three-image compound-noun retrieval benchmark.
//!
//! Everything here is pure computation over in-memory values: domain types,
//! similarity arithmetic, prompt construction, per-instance judging and the
//! benchmark runners. Embeddings and captions come in through the
//! [`eval::Embedder`], [`eval::PromptSource`] and [`captions::CompletionSource`]
//! traits; the `capens` crate provides file, HTTP and cached implementations.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod captions;
pub mod compound;
pub mod digest;
pub mod eval;
pub mod manifest;
pub mod prompt;
pub mod score;
pub mod synthetic;
pub mod vector;

pub use compound::{CompoundError, CompoundNoun};
pub use manifest::{BenchmarkInstance, BenchmarkManifest, Category, ImageRef};
pub use vector::{EmbeddingVector, VectorError};
