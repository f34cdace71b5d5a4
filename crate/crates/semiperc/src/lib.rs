//! Experiments, configuration and file formats on top of `semiperc-core`.

pub mod commands;
pub mod config;
pub mod csvout;
pub mod dataio;
pub mod ensemble;
pub mod error;

pub use commands::{run, Outcome};
pub use config::{Command, Config};
pub use error::{HarnessError, Result};
