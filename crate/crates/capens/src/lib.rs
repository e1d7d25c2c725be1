//! File formats, providers, caches, and the command-line front end for
//! caption-ensemble compound-noun retrieval evaluation.
//!
//! The scoring rules and runners live in `capens_core`; this crate supplies
//! the embedding and caption sources behind its traits.

pub mod cache;
pub mod captioner;
pub mod cli;
pub mod config;
pub mod http;
pub mod manifest;
pub mod provider;
pub mod report;
pub mod runner;
pub mod store;
pub mod strategy;

pub use capens_core as core;
