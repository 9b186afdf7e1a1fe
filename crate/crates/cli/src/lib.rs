//! Command-line front end for `betalm-core`.

pub mod args;
pub mod commands;
pub mod data;
pub mod error;
pub mod output;

pub use commands::run;
