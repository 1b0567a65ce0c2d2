//! Formats, remote surrogate client, experiment runner and CLI support for
//! text confounding adjustment. The algorithms live in `tca-core`.

pub mod config;
mod error;
pub mod io;
pub mod oracle_suite;
pub mod remote;
pub mod runner;

pub use error::{Error, Result};
