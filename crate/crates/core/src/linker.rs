//! Track linking: connects segments across frames (bridging detection gaps
//! up to a window) by assigning each frame's segments to unfinished track
//! tails, scored by signed box overlap, embedding distance, and time gap.

use alloc::vec::Vec;
use core::fmt;

use crate::float;
use crate::mask::BBox;
use crate::miner::{tracklets, Segment, TrackGraph};
use crate::{solve_relaxed_lap, PayoffMatrix};

/// Linking parameters and term toggles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkerConfig {
    /// Upper bound on the combined distance for a link to be allowed.
    pub tau: f64,
    /// Largest frame gap a link may bridge (also scales the time term).
    pub window: usize,
    /// Minimum number of segments for a track to be emitted.
    pub min_track: usize,
    /// Include the signed box-overlap term.
    pub use_siou: bool,
    /// Include the embedding-distance term.
    pub use_embedding: bool,
    /// Include the normalized time-gap term.
    pub use_time: bool,
}

impl Default for LinkerConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            window: 12,
            min_track: 5,
            use_siou: false,
            use_embedding: true,
            use_time: true,
        }
    }
}

impl LinkerConfig {
    /// `tau` must be finite, `window` and `min_track` at least 1, and at
    /// least one term enabled.
    pub fn validate(&self) -> Result<(), LinkError> {
        if !self.tau.is_finite() {
            return Err(LinkError::BadConfig {
                reason: "tau must be finite",
            });
        }
        if self.window == 0 {
            return Err(LinkError::BadConfig {
                reason: "window must be at least 1",
            });
        }
        if self.min_track == 0 {
            return Err(LinkError::BadConfig {
                reason: "min_track must be at least 1",
            });
        }
        if !(self.use_siou || self.use_embedding || self.use_time) {
            return Err(LinkError::BadConfig {
                reason: "at least one payoff term must be enabled",
            });
        }
        Ok(())
    }
}

/// Signed intersection-over-union of two boxes.
///
/// The "intersection" box is formed from the max of the lower corners and
/// the min of the upper ones even when that inverts it; an inverted box
/// contributes its (absolute) area negatively, so disjoint boxes score
/// below zero and the value decreases smoothly with separation. Two
/// degenerate boxes give 0.
pub fn siou(a: &BBox, b: &BBox) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let w = a.u2.min(b.u2) - a.u1.max(b.u1);
    let h = a.v2.min(b.v2) - a.v1.max(b.v1);
    let magnitude = float::abs(w) * float::abs(h);
    let inter = if w > 0.0 && h > 0.0 {
        magnitude
    } else {
        -magnitude
    };
    let denom = a.area() + b.area() - inter;
    if denom == 0.0 {
        return 0.0;
    }
    inter / denom
}

/// Linking payoff between a track tail and a later segment.
///
/// Sums the enabled terms - signed box IoU, embedding Euclidean distance,
/// and frame gap over window length - into a combined distance `d`, then
/// returns `-d` when the segments share a class and `d <= tau`, else `-inf`.
pub fn inference_payoff(
    prev: &Segment,
    cur: &Segment,
    cfg: &LinkerConfig,
) -> Result<f64, LinkError> {
    if cur.frame <= prev.frame {
        return Err(LinkError::FrameOrder {
            prev: prev.frame,
            cur: cur.frame,
        });
    }
    if prev.class != cur.class {
        return Ok(f64::NEG_INFINITY);
    }
    let mut d = 0.0;
    if cfg.use_siou {
        d += siou(&prev.bbox, &cur.bbox);
    }
    if cfg.use_embedding {
        let (Some(a), Some(b)) = (&prev.embedding, &cur.embedding) else {
            return Err(LinkError::MissingEmbedding { frame: cur.frame });
        };
        if a.len() != b.len() {
            return Err(LinkError::EmbeddingDim {
                left: a.len(),
                right: b.len(),
            });
        }
        d += float::euclid(a, b);
    }
    if cfg.use_time {
        d += (cur.frame - prev.frame) as f64 / cfg.window as f64;
    }
    Ok(if d <= cfg.tau { -d } else { f64::NEG_INFINITY })
}

/// Ids of the open track tails that frame `t` may link to: segments from
/// earlier frames within the window that have no successor yet, ordered by
/// (frame, id).
pub fn candidate_set(g: &TrackGraph, t: usize, window: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let lo = t.saturating_sub(window);
    for frame in lo..t {
        for &id in g.frame_ids(frame) {
            if g.next(id).is_none() {
                out.push(id);
            }
        }
    }
    out
}

/// One linked track: an id and the member segment indices in frame order.
///
/// Segment indices number the input segments of [`link_sequence`] in
/// frame-major input order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Track {
    /// Dense track id (first-appearance order).
    pub id: u64,
    /// Member segment indices, ascending in frame.
    pub segments: Vec<usize>,
}

impl Track {
    /// Number of segments on the track.
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    /// True for a track with no segments (never produced by linking).
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// Links a sequence frame by frame and returns the surviving tracks.
///
/// For each frame, the open tails within the window compete for the frame's
/// segments through the relaxed assignment over [`inference_payoff`]; chains
/// then become tracks, short ones are dropped, and ids are renumbered
/// densely in first-appearance order.
pub fn link_sequence(
    frames: Vec<Vec<Segment>>,
    cfg: &LinkerConfig,
) -> Result<Vec<Track>, LinkError> {
    cfg.validate()?;
    let mut g = TrackGraph::new();
    for (t, segments) in frames.into_iter().enumerate() {
        for s in &segments {
            if s.frame != t {
                return Err(LinkError::FrameIndexMismatch {
                    index: t,
                    found: s.frame,
                });
            }
        }
        let tails = candidate_set(&g, t, cfg.window);
        let mut payoffs = Vec::with_capacity(tails.len() * segments.len());
        for &tail in &tails {
            for cur in &segments {
                payoffs.push(inference_payoff(g.segment(tail), cur, cfg)?);
            }
        }
        let matrix = PayoffMatrix::new(tails.len(), segments.len(), payoffs)
            .expect("payoffs are never NaN or +inf");
        let matched = solve_relaxed_lap(&matrix).pairs().to_vec();
        let cur_ids: Vec<usize> = segments.into_iter().map(|s| g.insert_segment(s)).collect();
        for (i, j) in matched {
            g.add_edge(tails[i], cur_ids[j])
                .expect("matched pairs satisfy the edge invariants");
        }
    }
    let tracks = tracklets(&g)
        .into_iter()
        .enumerate()
        .map(|(i, segments)| Track {
            id: i as u64,
            segments,
        })
        .collect();
    Ok(filter_short_tracks(tracks, cfg.min_track))
}

/// Drops tracks shorter than `min_track` segments and renumbers the rest
/// densely, keeping their order.
pub fn filter_short_tracks(tracks: Vec<Track>, min_track: usize) -> Vec<Track> {
    tracks
        .into_iter()
        .filter(|t| t.len() >= min_track)
        .enumerate()
        .map(|(i, mut t)| {
            t.id = i as u64;
            t
        })
        .collect()
}

/// Errors from linking configuration or payoff evaluation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LinkError {
    /// Configuration violates its invariants.
    BadConfig {
        /// What is wrong.
        reason: &'static str,
    },
    /// A frame's segments carry the wrong frame index.
    FrameIndexMismatch {
        /// Position in the input.
        index: usize,
        /// Frame index actually found.
        found: usize,
    },
    /// Links must point forward in time.
    FrameOrder {
        /// Frame of the earlier segment.
        prev: usize,
        /// Frame of the later segment.
        cur: usize,
    },
    /// The embedding term needs embeddings on both segments.
    MissingEmbedding {
        /// Frame of the segment lacking one.
        frame: usize,
    },
    /// Embedding dimensions differ.
    EmbeddingDim {
        /// Dimension on the earlier segment.
        left: usize,
        /// Dimension on the later segment.
        right: usize,
    },
}

impl fmt::Display for LinkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinkError::BadConfig { reason } => write!(f, "bad linker config: {reason}"),
            LinkError::FrameIndexMismatch { index, found } => {
                write!(f, "segment from frame {found} at sequence position {index}")
            }
            LinkError::FrameOrder { prev, cur } => {
                write!(
                    f,
                    "link from frame {prev} to frame {cur} does not advance in time"
                )
            }
            LinkError::MissingEmbedding { frame } => {
                write!(
                    f,
                    "segment in frame {frame} lacks the embedding the config requires"
                )
            }
            LinkError::EmbeddingDim { left, right } => {
                write!(f, "embedding dimensions differ: {left} vs {right}")
            }
        }
    }
}

impl core::error::Error for LinkError {}
