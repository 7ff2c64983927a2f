//! Detection bundles as JSON Lines: one record per segment, with the mask in
//! column-major run-length encoding. Loading validates every type invariant
//! (run sums, score range, unit embeddings, bbox tightness) and names the
//! offending line on failure.

use std::path::Path;

use serde::{Deserialize, Serialize};
use trackmine_core::{ClassId, Mask, Segment};

use super::{read_text, write_atomic, FormatError};

/// RLE mask payload: `size` is `[height, width]`, `counts` alternates
/// background/foreground run lengths starting with background.
#[derive(Clone, Debug, Deserialize, Serialize)]
struct MaskRecord {
    size: [u32; 2],
    counts: Vec<u32>,
}

/// One detection line; field order here is the serialization order.
#[derive(Clone, Debug, Deserialize, Serialize)]
struct DetectionRecord {
    frame: usize,
    class: String,
    score: f64,
    bbox: [f64; 4],
    mask: MaskRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_track: Option<u64>,
}

/// A loaded sequence: per-frame segment lists plus the class-name table that
/// maps segment classes back to their file spelling.
///
/// Within a frame, segments keep file order; a segment's position in its
/// frame list is the `det_index` used by track-assignment files.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBundle {
    /// Sequence id (the source file stem by default).
    pub name: String,
    /// Grid `(height, width)` shared by every mask; `None` for an empty bundle.
    pub frame_size: Option<(u32, u32)>,
    /// Segments per frame; index = frame number.
    pub frames: Vec<Vec<Segment>>,
    /// Class names; `ClassId(i)` refers to `class_names[i]`.
    pub class_names: Vec<String>,
}

impl SequenceBundle {
    /// Total number of segments across all frames.
    pub fn segment_count(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    /// Class id for `name`, appending it to the table when new.
    pub fn class_id(&mut self, name: &str) -> ClassId {
        match self.class_names.iter().position(|c| c == name) {
            Some(i) => ClassId(i as u32),
            None => {
                self.class_names.push(name.to_owned());
                ClassId(self.class_names.len() as u32 - 1)
            }
        }
    }
}

/// Loads a detections file into a validated bundle.
///
/// Empty files give a bundle with zero frames. Each record is checked
/// against the segment invariants; the first failure is reported with its
/// line number.
pub fn load_detections(path: &Path) -> Result<SequenceBundle, FormatError> {
    let text = read_text(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut bundle = SequenceBundle {
        name,
        frame_size: None,
        frames: Vec::new(),
        class_names: Vec::new(),
    };
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: DetectionRecord =
            serde_json::from_str(raw).map_err(|e| FormatError::line(path, line, e.to_string()))?;
        let segment = build_segment(&record, &mut bundle)
            .map_err(|message| FormatError::line(path, line, message))?;
        if bundle.frames.len() <= record.frame {
            bundle.frames.resize_with(record.frame + 1, Vec::new);
        }
        bundle.frames[record.frame].push(segment);
    }
    Ok(bundle)
}

/// Validates one record against the bundle so far and builds its segment.
fn build_segment(record: &DetectionRecord, bundle: &mut SequenceBundle) -> Result<Segment, String> {
    let [h, w] = record.mask.size;
    match bundle.frame_size {
        None => bundle.frame_size = Some((h, w)),
        Some(expected) if expected != (h, w) => {
            return Err(format!(
                "mask size [{}, {}] does not match the sequence frame size [{}, {}]",
                h, w, expected.0, expected.1
            ));
        }
        Some(_) => {}
    }
    let mask =
        Mask::from_runs(h, w, record.mask.counts.clone()).map_err(|e| format!("mask: {e}"))?;
    let class = bundle.class_id(&record.class);
    let mut segment =
        Segment::new(record.frame, class, mask, record.score).map_err(|e| e.to_string())?;
    let tight = segment.bbox;
    let stored = record.bbox;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-6;
    if !(close(stored[0], tight.u1)
        && close(stored[1], tight.v1)
        && close(stored[2], tight.u2)
        && close(stored[3], tight.v2))
    {
        return Err(format!(
            "bbox [{}, {}, {}, {}] is not the tight box of the mask ([{}, {}, {}, {}])",
            stored[0], stored[1], stored[2], stored[3], tight.u1, tight.v1, tight.u2, tight.v2
        ));
    }
    if let Some(embedding) = &record.embedding {
        segment = segment
            .with_embedding(embedding.clone())
            .map_err(|e| e.to_string())?;
    }
    if let Some(track) = record.gt_track {
        segment = segment.with_gt_track(track);
    }
    Ok(segment)
}

/// Writes a bundle as canonical JSON Lines: frame-major order, one record per
/// segment, stable field order.
pub fn write_detections(bundle: &SequenceBundle, path: &Path) -> Result<(), FormatError> {
    let mut out = String::new();
    for frame in &bundle.frames {
        for segment in frame {
            let record = DetectionRecord {
                frame: segment.frame,
                class: bundle
                    .class_names
                    .get(segment.class.0 as usize)
                    .cloned()
                    .unwrap_or_else(|| segment.class.0.to_string()),
                score: segment.score,
                bbox: [
                    segment.bbox.u1,
                    segment.bbox.v1,
                    segment.bbox.u2,
                    segment.bbox.v2,
                ],
                mask: MaskRecord {
                    size: [segment.mask.height(), segment.mask.width()],
                    counts: segment.mask.runs().to_vec(),
                },
                embedding: segment.embedding.clone(),
                gt_track: segment.gt_track,
            };
            out.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out.push('\n');
        }
    }
    write_atomic(path, out.as_bytes())
}
