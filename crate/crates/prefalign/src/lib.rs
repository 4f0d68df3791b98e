//! Desk-scale preference-alignment laboratory for caregiver dialogue.
//!
//! The crate wires an end-to-end pipeline: build a QA seed corpus, generate
//! chosen/rejected preference pairs, fine-tune a micro decoder-only language
//! model with LoRA adapters under the DPO objective against a frozen
//! reference, score the result with a seven-metric evaluation suite, and
//! render benchmark tables and charts.
//!
//! Each stage is a standalone module with its own types and tests:
//!
//! - [`corpus`] — QA ingestion, pair generation, validation, disjoint splits,
//!   JSONL persistence
//! - [`model`] — byte-level micro transformer, LoRA adapters, sequence
//!   log-likelihoods, sampling, checkpoints
//! - [`dpo`] — DPO loss, warmup+cosine schedule, AdamW training loop, early
//!   stopping, preference accuracy
//! - [`providers`] — embedding / judge / NLI / formality / generator backends
//!   with real HTTP clients and deterministic mocks
//! - [`metrics`] — semantic, factual and human-centric metrics plus the
//!   per-model evaluation driver
//! - [`report`] — benchmark tables (markdown/CSV) and the grouped-bar SVG
//!   chart
//! - [`config`] / [`pipeline`] — the run configuration file and the six
//!   pipeline commands behind the `prefalign` binary
//!
//! The `examples/` directory has one runnable program per capability; start
//! with `full_pipeline` for the end-to-end tour.

pub mod config;
pub mod corpus;
pub mod dpo;
mod error;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod providers;
pub mod report;
pub mod synth;
mod util;

pub use error::{Error, Result};
