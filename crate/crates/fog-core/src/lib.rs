//! Resource-budgeted freezing-of-gait detection toolkit.
//!
//! The pipeline: DAPHNet-format accelerometer recordings are parsed and
//! binarized ([`ingest`]), sliced into windows and turned into time/frequency
//! feature vectors ([`features`]), classified by a prototype model trained
//! under explicit sparsity budgets ([`protonn`]) or by tree baselines
//! ([`trees`]), evaluated by a cross-validated harness ([`eval`]), and
//! replayed through a fixed-memory streaming simulator that emits rhythmic
//! auditory stimulation triggers ([`stream`]).

pub mod cache;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod model;
pub mod protonn;
pub mod stream;
pub mod synth;
pub mod trees;

pub use error::{Error, Result};
