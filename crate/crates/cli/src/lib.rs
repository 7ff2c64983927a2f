//! Standard-library companion to `trackmine-core`: on-disk artifact formats,
//! a deterministic synthetic-sequence generator, TOML configuration, and the
//! drivers behind the `trackmine` command-line tool.

#![deny(missing_docs)]

pub mod commands;
pub mod config;
pub mod formats;
pub mod synth;

pub use commands::{CliError, EvalMode, OutSpec};
pub use config::FileConfig;
pub use formats::{FormatError, SequenceBundle};
pub use synth::{synth_generate, SynthConfig, SynthError};
