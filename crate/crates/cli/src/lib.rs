//! Library half of the `boa` command-line driver; the binary is a thin
//! wrapper so integration tests can exercise the same code paths.

pub mod commands;
pub mod config;
pub mod imageio;
pub mod report;
