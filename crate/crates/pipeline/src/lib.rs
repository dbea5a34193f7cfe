//! Command-line pipeline and HTTP service over `stance_core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod layout;
pub mod manifest;
pub mod ops;
pub mod service;

pub use config::PipelineConfig;
pub use error::{ErrorKind, PipelineError};
pub use ops::Workspace;
