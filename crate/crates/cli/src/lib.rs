//! File formats, run manifests and the command-line driver around
//! [`pvseg_core`].

pub mod cli;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod scene_file;

pub use error::{CliError, ExitCode};
