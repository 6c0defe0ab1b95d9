//! File formats, reports and the command-line front end for
//! [`certiprop_core`].

pub mod cli;
pub mod error;
pub mod idx;
pub mod model_io;
pub mod report;
pub mod source;

pub use error::{CliError, Result};
