//! Command-line front end for grcca: dataset preparation, training,
//! evaluation, grid search and the end-to-end reproduction checks.

pub mod app;
pub mod config;
pub mod error;
pub mod grid;
pub mod hash;
pub mod prepare;
pub mod reproduce;
pub mod run;

pub use app::{main_with_args, Cli};
pub use config::{RunConfig, Task};
pub use error::{CliError, Result};
