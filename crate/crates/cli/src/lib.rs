//! Far-field speaker verification pipeline: configuration, file formats and
//! the `ffsv` subcommands.

pub mod commands;
pub mod config;
pub mod devset;
pub mod error;
pub mod manifest;
pub mod pipeline;
