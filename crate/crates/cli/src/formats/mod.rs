//! On-disk artifact formats: detection bundles (JSON Lines), dense flow
//! fields (binary), track assignments (JSON Lines), and evaluation reports
//! (JSON). All writers are atomic (write to a temp file, then rename) and
//! deterministic; all loaders report malformed records by line number.

pub mod detections;
pub mod flow;
pub mod report;
pub mod tracks;

pub use detections::{load_detections, write_detections, SequenceBundle};
pub use flow::{flow_file_name, load_flow, load_flow_dir, write_flow};
pub use report::{load_report, write_report, ClassReport, ReportDoc};
pub use tracks::{load_tracks, write_tracks, TrackAssignments, TrackRecord};

use std::io::Write;
use std::path::Path;

use thiserror::Error;

/// Errors from reading or writing artifact files.
#[derive(Debug, Error)]
pub enum FormatError {
    /// Underlying filesystem failure.
    #[error("{path}: {source}")]
    Io {
        /// File being read or written.
        path: String,
        /// Operating-system error.
        source: std::io::Error,
    },
    /// A record that does not parse or violates a type invariant.
    #[error("{path}:{line}: {message}")]
    Line {
        /// File containing the record.
        path: String,
        /// 1-based line number.
        line: usize,
        /// What is wrong with the record.
        message: String,
    },
    /// A whole-file problem (bad magic, truncation, missing header).
    #[error("{path}: {message}")]
    Invalid {
        /// Offending file.
        path: String,
        /// What is wrong with the file.
        message: String,
    },
}

impl FormatError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn line(path: &Path, line: usize, message: impl Into<String>) -> Self {
        FormatError::Line {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }

    fn invalid(path: &Path, message: impl Into<String>) -> Self {
        FormatError::Invalid {
            path: path.display().to_string(),
            message: message.into(),
        }
    }
}

/// Writes `bytes` to `path` atomically, creating parent directories.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| FormatError::io(path, e))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".tmp-")
        .tempfile_in(dir)
        .map_err(|e| FormatError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| FormatError::io(path, e))?;
    tmp.flush().map_err(|e| FormatError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| FormatError::io(path, e.error))?;
    Ok(())
}

/// Reads a whole file, wrapping I/O failures with the path.
pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, FormatError> {
    std::fs::read(path).map_err(|e| FormatError::io(path, e))
}

/// Reads a whole text file, wrapping I/O failures with the path.
pub(crate) fn read_text(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}
