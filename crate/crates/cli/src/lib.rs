//! Library surface of the command-line driver, exposed so integration tests
//! can run the commands in-process.

pub mod artifacts;
pub mod commands;
pub mod config;
