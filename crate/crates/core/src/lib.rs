//! Corpus construction and benchmark evaluation for counseling-domain LLMs.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`model`]: shared domain types, invariant checks, JSONL persistence
//! - [`ingest`]: cleaning of platform QA exports and corpus statistics
//! - [`gateway`]: chat-completion access with retries, rate limits and a replay cache
//! - [`dialogue`]: multi-turn dialogue generation, evidence judgment, integration and refinement
//! - [`knowledge`]: book segmentation, retrieval, student answering and teacher adjudication
//! - [`bench`]: benchmark loading, answer extraction, scoring, text metrics and reports
//! - [`review`]: the human review queue and SFT export

pub mod bench;
#[cfg(feature = "cli")]
pub mod cli;
pub mod clock;
pub mod config;
pub mod dialogue;
pub mod gateway;
pub mod ingest;
pub mod knowledge;
pub mod model;
pub mod review;

