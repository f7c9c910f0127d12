//! Command-line companion to the core library: file formats, worker
//! threading, and the generate/train/evaluate/predict/plot commands.

pub mod checkpoint;
pub mod commands;
pub mod errors;
pub mod fieldfile;
pub mod pgm;
pub mod runconfig;
pub mod srop1;
pub mod threads;

pub use errors::CliError;
