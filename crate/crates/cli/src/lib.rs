//! Library side of the `lpscope` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod scenario;
