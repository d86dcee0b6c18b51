//! Command-line driver for `cohortlab-core`.
//!
//! Reads scenario, design and dataset files, runs the analyses and
//! simulations, and writes each result as a directory of artifacts with a
//! `manifest.json` recording hashes, seeds and the configuration fingerprint.

pub mod bundle;
pub mod commands;
pub mod error;
pub mod io;
pub mod report;
pub mod scenario;
pub mod table;

pub use error::CliError;
