//! Framework-aware analysis of corporate ESG reports.
//!
//! The crate turns a report into addressable segments, indexes them twice
//! (BM25 keyword postings and dense vectors), retrieves evidence per
//! framework metric through a fused keyword + semantic + rerank channel,
//! classifies each metric's disclosure status with a chat model, and scores
//! the results against ground truth.
//!
//! Pipeline at a glance:
//!
//! ```text
//! catalog ──► refine ──► expand ─────────────┐
//!                                            ▼
//! report ──► pages ──► merge ──► segments ──► keyword index ─┐
//!                                       └──► vector index ──┴─► dual-channel retrieval
//!                                                                         │
//!                                           prompt ◄── top-5 evidence ◄───┘
//!                                              │
//!                                              ▼
//!                                     chat model ──► verdict ──► results / evaluation
//! ```
//!
//! Every model call goes through [`gateway::ModelGateway`]. The
//! [`gateway::MockGateway`] backend is fully deterministic, so the whole
//! pipeline runs offline; see the runnable programs under `examples/`.

pub mod analysis;
pub mod catalog;
pub mod config;
pub mod error;
pub mod eval;
pub mod gateway;
pub mod index;
pub mod ingest;
pub mod retrieval;
pub mod service;
pub mod text;

pub use error::{Error, Result};

/// Directory holding the shipped synthetic fixtures (catalog, report, ground truth).
pub fn fixtures_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}
