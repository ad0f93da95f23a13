//! HTTP service and command-line front end for flowscribe.

pub mod cli;
pub mod config;
pub mod error;
pub mod llm;
pub mod runs;
pub mod schema;
pub mod server;
