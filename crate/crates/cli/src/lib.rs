//! Orchestration of the tokenizer / MDNN pipeline: config, artifact layout,
//! run manifest and one runner per stage.

pub mod args;
pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod store;

pub use args::{run, Cli, Command};
pub use config::PipelineConfig;
pub use manifest::{Manifest, ManifestEntry};
pub use pipeline::{Pipeline, StageStatus};
