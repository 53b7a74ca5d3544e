//! Calibration study harness for question-answering language models.
//!
//! The pipeline: ingest datasets into a canonical format, elicit answers and
//! confidences with several extraction methods, grade answers with a judge
//! model, and score calibration (ECE, AUC, temperature-scaled ECE/Brier).

pub mod client;
pub mod config;
pub mod datasets;
pub mod elicitation;
pub mod equivalence;
pub mod error;
pub mod expressions;
pub mod harness;
pub mod manifest;
pub mod metrics;
pub mod parse;
pub mod report;
pub mod scaling;
pub mod templates;

pub use error::{Error, Result};
