//! Track-assignment files as JSON Lines: a header record naming the sequence
//! followed by one `{"frame", "det_index", "track_id"}` record per assigned
//! detection, sorted by `(frame, det_index)`. `det_index` is a detection's
//! 0-based position among its frame's records in the detections file.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use trackmine_core::Track;

use super::{read_text, write_atomic, FormatError};

/// Header line of a tracks file.
#[derive(Clone, Debug, Deserialize, Serialize)]
struct Header {
    sequence: String,
    frames: usize,
    tracks: usize,
}

/// One detection-to-track assignment.
#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq, PartialOrd, Ord)]
pub struct TrackRecord {
    /// Frame the detection belongs to.
    pub frame: usize,
    /// Position of the detection among its frame's records.
    pub det_index: usize,
    /// Assigned track id.
    pub track_id: u64,
}

/// A parsed tracks file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrackAssignments {
    /// Sequence id from the header.
    pub sequence: String,
    /// Frame count from the header.
    pub frames: usize,
    /// Assignments sorted by `(frame, det_index)`.
    pub records: Vec<TrackRecord>,
}

impl TrackAssignments {
    /// Number of distinct track ids.
    pub fn track_count(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.track_id)
            .collect::<BTreeSet<_>>()
            .len()
    }
}

/// Writes tracks over a sequence whose frames hold `frame_lens[t]` detections.
///
/// Track segment indices count detections in frame-major order; they are
/// translated back to `(frame, det_index)` positions here.
pub fn write_tracks(
    sequence: &str,
    frame_lens: &[usize],
    tracks: &[Track],
    path: &Path,
) -> Result<(), FormatError> {
    // Prefix sums turn a frame-major segment index into (frame, det_index).
    let mut starts = Vec::with_capacity(frame_lens.len() + 1);
    let mut total = 0usize;
    for &len in frame_lens {
        starts.push(total);
        total += len;
    }
    starts.push(total);
    let locate = |segment: usize| -> (usize, usize) {
        debug_assert!(segment < total, "segment index out of range");
        let frame = starts.partition_point(|&s| s <= segment) - 1;
        (frame, segment - starts[frame])
    };

    let mut records: Vec<TrackRecord> = tracks
        .iter()
        .flat_map(|track| {
            track.segments.iter().map(|&s| {
                let (frame, det_index) = locate(s);
                TrackRecord {
                    frame,
                    det_index,
                    track_id: track.id,
                }
            })
        })
        .collect();
    records.sort();

    let header = Header {
        sequence: sequence.to_owned(),
        frames: frame_lens.len(),
        tracks: tracks.len(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for record in &records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Loads a tracks file, rejecting missing headers and duplicate assignments.
pub fn load_tracks(path: &Path) -> Result<TrackAssignments, FormatError> {
    let text = read_text(path)?;
    let mut header: Option<Header> = None;
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            header = Some(
                serde_json::from_str(raw)
                    .map_err(|e| FormatError::line(path, line, format!("header: {e}")))?,
            );
            continue;
        }
        let record: TrackRecord =
            serde_json::from_str(raw).map_err(|e| FormatError::line(path, line, e.to_string()))?;
        if !seen.insert((record.frame, record.det_index)) {
            return Err(FormatError::line(
                path,
                line,
                format!(
                    "detection (frame {}, det_index {}) assigned twice",
                    record.frame, record.det_index
                ),
            ));
        }
        records.push(record);
    }
    let Some(header) = header else {
        return Err(FormatError::invalid(path, "missing header record"));
    };
    records.sort();
    Ok(TrackAssignments {
        sequence: header.sequence,
        frames: header.frames,
        records,
    })
}
