//! The `keytone` command line and the pair-comparison HTTP service.

pub mod cli;
pub mod server;
pub mod session;
