//! Library side of the `edlm` binary: argument parsing, config merging,
//! the subcommands and the `verify` property suite.

pub mod args;
pub mod commands;
pub mod output;
pub mod verify;

pub use args::Cli;
pub use commands::run;
