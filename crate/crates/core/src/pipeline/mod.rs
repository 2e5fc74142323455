//! File-based pipeline stages.

pub mod config;
pub mod experiment;
pub mod io;
pub mod stages;

pub use config::RunConfig;
pub use stages::{Report, Run};
