//! Command-line front end: configuration handling and the pipeline
//! commands (`synth`, `search`, `train`, `eval`, `attention-dump`).

pub mod config;
pub mod pipeline;

use attnga_core::Error;

pub use config::{ConfigLayer, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Process exit status for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Shape(_)
        | Error::Parameter(_)
        | Error::Validation(_)
        | Error::Config(_)
        | Error::Decode(_)
        | Error::Json { .. } => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
        Error::Numeric(_) | Error::Fitness { .. } => EXIT_NUMERIC,
    }
}
