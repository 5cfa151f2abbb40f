//! Library side of the `iml` binary: instance parsing, report building,
//! and the five commands, kept separate from `main` so integration tests can
//! drive them in-process.

pub mod commands;
pub mod instance;
pub mod report;

pub use instance::InstanceFile;
pub use report::Val;
