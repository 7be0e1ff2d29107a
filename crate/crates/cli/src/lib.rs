//! Library half of the `dimers` binary: config handling, output files and
//! one function per subcommand.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
