//! Std companion to `sot-core`: configuration, corpus files, the
//! chat-completion client and the batch pipeline behind the `sotkit` binary.

pub mod client;
pub mod config;
pub mod corpus;
pub mod error;
pub mod io;
pub mod judge;
pub mod pipeline;

pub use config::{Overrides, PipelineConfig};
pub use error::PipelineError;
pub use pipeline::{cmd_demo, cmd_eval, cmd_filter, cmd_gen, cmd_ingest, cmd_stats, GenMode};
