//! Tracklet mining: frame-by-frame assignment of current detections to
//! flow-warped previous-frame detections, gated by overlap statistics so
//! only unambiguous continuations are connected.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::float;
use crate::mask::{intersection_stats, FlowField, IntersectionStats, Mask, MaskError};
use crate::{solve_relaxed_lap, BBox, ClassId, PayoffMatrix};

/// One detection: a mask on a grid at a frame, with class, confidence, and
/// optional appearance embedding / ground-truth label.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    /// Frame index within the sequence.
    pub frame: usize,
    /// Class label.
    pub class: ClassId,
    /// Segmentation mask (never empty).
    pub mask: Mask,
    /// Tight bounding box of `mask`, cached at construction.
    pub bbox: BBox,
    /// Detector confidence in `[0, 1]`.
    pub score: f64,
    /// Unit-norm appearance embedding, when available.
    pub embedding: Option<Vec<f64>>,
    /// Ground-truth track label, when available.
    pub gt_track: Option<u64>,
}

impl Segment {
    /// Builds a segment, rejecting empty masks and out-of-range scores.
    pub fn new(frame: usize, class: ClassId, mask: Mask, score: f64) -> Result<Self, MineError> {
        if mask.is_empty() {
            return Err(MineError::EmptyMask);
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(MineError::BadScore { score });
        }
        let bbox = mask.bbox();
        Ok(Self {
            frame,
            class,
            mask,
            bbox,
            score,
            embedding: None,
            gt_track: None,
        })
    }

    /// Attaches an appearance embedding; it must be finite, non-empty, and
    /// unit-norm to within 1e-6.
    pub fn with_embedding(mut self, embedding: Vec<f64>) -> Result<Self, MineError> {
        if embedding.is_empty() {
            return Err(MineError::BadEmbedding {
                reason: "embedding is empty",
            });
        }
        if embedding.iter().any(|x| !x.is_finite()) {
            return Err(MineError::BadEmbedding {
                reason: "embedding has non-finite entries",
            });
        }
        let norm = float::sqrt(embedding.iter().map(|x| x * x).sum());
        if float::abs(norm - 1.0) > 1e-6 {
            return Err(MineError::BadEmbedding {
                reason: "embedding is not unit-norm",
            });
        }
        self.embedding = Some(embedding);
        Ok(self)
    }

    /// Attaches a ground-truth track label.
    pub fn with_gt_track(mut self, track: u64) -> Self {
        self.gt_track = Some(track);
        self
    }
}

/// Directed graph over segments where every vertex has at most one incoming
/// and one outgoing edge, so maximal paths are tracklets. Segment ids are
/// assigned densely in insertion order.
#[derive(Clone, Debug, Default)]
pub struct TrackGraph {
    segments: Vec<Segment>,
    next: Vec<Option<usize>>,
    prev: Vec<Option<usize>>,
    frames: BTreeMap<usize, Vec<usize>>,
}

impl TrackGraph {
    /// Empty graph.
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of segments.
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    /// True when the graph holds no segments.
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Adds a segment and returns its id.
    pub fn insert_segment(&mut self, segment: Segment) -> usize {
        let id = self.segments.len();
        self.frames.entry(segment.frame).or_default().push(id);
        self.segments.push(segment);
        self.next.push(None);
        self.prev.push(None);
        id
    }

    /// Segment by id. Panics when the id was never issued.
    pub fn segment(&self, id: usize) -> &Segment {
        &self.segments[id]
    }

    /// All segments, indexed by id.
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Ids of the segments in `frame`, in insertion order.
    pub fn frame_ids(&self, frame: usize) -> &[usize] {
        self.frames.get(&frame).map_or(&[], Vec::as_slice)
    }

    /// Largest frame index present, if any.
    pub fn max_frame(&self) -> Option<usize> {
        self.frames.keys().next_back().copied()
    }

    /// Successor of `id` along its tracklet.
    pub fn next(&self, id: usize) -> Option<usize> {
        self.next.get(id).copied().flatten()
    }

    /// Predecessor of `id` along its tracklet.
    pub fn prev(&self, id: usize) -> Option<usize> {
        self.prev.get(id).copied().flatten()
    }

    /// Connects `from` to `to`, enforcing the graph invariants: both ids
    /// exist, neither endpoint is already connected on that side, the edge
    /// points forward in time, and both segments share a class.
    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<(), MineError> {
        for id in [from, to] {
            if id >= self.segments.len() {
                return Err(MineError::UnknownSegment { id });
            }
        }
        if self.segments[from].frame >= self.segments[to].frame {
            return Err(MineError::EdgeOrder { from, to });
        }
        if self.segments[from].class != self.segments[to].class {
            return Err(MineError::EdgeClassMismatch { from, to });
        }
        if self.next[from].is_some() {
            return Err(MineError::EdgeConflict { id: from });
        }
        if self.prev[to].is_some() {
            return Err(MineError::EdgeConflict { id: to });
        }
        self.next[from] = Some(to);
        self.prev[to] = Some(from);
        Ok(())
    }
}

/// Maximal paths of the graph as id chains, ordered by the head segment's
/// (frame, id). Isolated segments yield single-element chains.
pub fn tracklets(g: &TrackGraph) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for ids in g.frames.values() {
        for &id in ids {
            if g.prev(id).is_some() {
                continue;
            }
            let mut chain = vec![id];
            let mut cur = id;
            while let Some(nxt) = g.next(cur) {
                chain.push(nxt);
                cur = nxt;
            }
            out.push(chain);
        }
    }
    out
}

/// Thresholds gating which warped-overlap patterns count as unambiguous.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinerConfig {
    /// Minimum margin between the largest and second-largest overlap.
    pub tau0: f64,
    /// Minimum largest-overlap area in pixels.
    pub tau1: f64,
    /// Minimum ratio of largest overlap to uncovered residual.
    pub tau2: f64,
}

impl Default for MinerConfig {
    fn default() -> Self {
        Self {
            tau0: 10.0,
            tau1: 10.0,
            tau2: 2.0,
        }
    }
}

impl MinerConfig {
    /// All thresholds must be finite and non-negative.
    pub fn validate(&self) -> Result<(), MineError> {
        for tau in [self.tau0, self.tau1, self.tau2] {
            if !tau.is_finite() || tau < 0.0 {
                return Err(MineError::BadConfig {
                    reason: "mining thresholds must be finite and non-negative",
                });
            }
        }
        Ok(())
    }
}

/// Ambiguity gate for continuing a tracklet into a segment: 0 when the
/// overlap pattern is decisive, `-inf` otherwise.
///
/// The pattern is decisive when the classes agree and none of these hold:
/// the best-overlap margin `b1 - b2` is below `tau0`, the best overlap `b1`
/// is below `tau1`, or the ratio of `b1` to the uncovered residual is below
/// `tau2` (an exactly covered segment has infinite ratio).
pub fn eta_mining(same_class: bool, stats: &IntersectionStats, cfg: &MinerConfig) -> f64 {
    if !same_class {
        return f64::NEG_INFINITY;
    }
    let b1 = stats.b1 as f64;
    let b2 = stats.b2 as f64;
    let ratio = if stats.r == 0 {
        f64::INFINITY
    } else {
        b1 / stats.r as f64
    };
    if !(b1 - b2 < cfg.tau0) && !(b1 < cfg.tau1) && !(ratio < cfg.tau2) {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

/// Mining payoff between a previous-frame segment and a current segment:
/// the mask IoU of the current segment with the flow-warped previous mask,
/// plus the ambiguity gate for the current segment.
///
/// # Arguments
/// * `warped_prev` - `prev`'s mask already warped into the current frame.
/// * `stats` - overlap statistics of `cur` against all warped same-class
///   previous masks (shared across all `prev` candidates of that class).
pub fn mining_payoff(
    prev: &Segment,
    cur: &Segment,
    warped_prev: &Mask,
    stats: &IntersectionStats,
    cfg: &MinerConfig,
) -> Result<f64, MineError> {
    let eta = eta_mining(prev.class == cur.class, stats, cfg);
    if eta == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let iou = cur.mask.iou(warped_prev)?;
    Ok(iou + eta)
}

/// Extends the graph by one frame: warps the previous frame's masks through
/// `flow`, scores all same-class pairs, solves the relaxed assignment, and
/// adds an edge per matched pair.
///
/// `segments` must share one frame index, strictly greater than anything in
/// the graph; `flow` maps that frame back to the previous one and may be
/// omitted when the previous frame is empty. On error the graph is unchanged.
pub fn mine_step(
    g: &mut TrackGraph,
    segments: Vec<Segment>,
    flow: Option<&FlowField>,
    cfg: &MinerConfig,
) -> Result<(), MineError> {
    cfg.validate()?;
    let Some(t) = segments.first().map(|s| s.frame) else {
        return Ok(());
    };
    for s in &segments {
        if s.frame != t {
            return Err(MineError::MixedFrames {
                expected: t,
                found: s.frame,
            });
        }
    }
    if let Some(max) = g.max_frame() {
        if max >= t {
            return Err(MineError::NonMonotonicFrame { frame: t, max });
        }
    }

    let prev_ids: Vec<usize> = if t == 0 {
        Vec::new()
    } else {
        g.frame_ids(t - 1).to_vec()
    };
    let matched = if prev_ids.is_empty() {
        Vec::new()
    } else {
        let flow = flow.ok_or(MineError::MissingFlow { frame: t })?;
        let warped: Vec<Mask> = prev_ids
            .iter()
            .map(|&id| g.segment(id).mask.warp(flow))
            .collect::<Result<_, _>>()?;

        // Overlap statistics per current segment, against the warped masks
        // of its own class only.
        let mut stats_per_cur: Vec<IntersectionStats> = Vec::with_capacity(segments.len());
        for cur in &segments {
            let same_class: Vec<&Mask> = prev_ids
                .iter()
                .zip(&warped)
                .filter(|(&id, _)| g.segment(id).class == cur.class)
                .map(|(_, m)| m)
                .collect();
            stats_per_cur.push(intersection_stats(&cur.mask, &same_class)?);
        }

        let mut payoffs = Vec::with_capacity(prev_ids.len() * segments.len());
        for (&pid, warped_prev) in prev_ids.iter().zip(&warped) {
            for (cur, stats) in segments.iter().zip(&stats_per_cur) {
                payoffs.push(mining_payoff(g.segment(pid), cur, warped_prev, stats, cfg)?);
            }
        }
        let matrix = PayoffMatrix::new(prev_ids.len(), segments.len(), payoffs)
            .expect("payoffs are never NaN or +inf");
        solve_relaxed_lap(&matrix).pairs().to_vec()
    };

    let cur_ids: Vec<usize> = segments.into_iter().map(|s| g.insert_segment(s)).collect();
    for (i, j) in matched {
        g.add_edge(prev_ids[i], cur_ids[j])
            .expect("matched pairs satisfy the edge invariants");
    }
    Ok(())
}

/// Mines a whole sequence: `frames[t]` holds frame `t`'s segments and
/// `flows[t - 1]` maps frame `t` back to `t - 1`.
pub fn mine_sequence(
    frames: Vec<Vec<Segment>>,
    flows: &[FlowField],
    cfg: &MinerConfig,
) -> Result<TrackGraph, MineError> {
    cfg.validate()?;
    let expected = frames.len().saturating_sub(1);
    if flows.len() != expected {
        return Err(MineError::FlowCount {
            expected,
            got: flows.len(),
        });
    }
    let mut g = TrackGraph::new();
    for (t, segments) in frames.into_iter().enumerate() {
        for s in &segments {
            if s.frame != t {
                return Err(MineError::MixedFrames {
                    expected: t,
                    found: s.frame,
                });
            }
        }
        if t == 0 {
            for s in segments {
                g.insert_segment(s);
            }
        } else {
            mine_step(&mut g, segments, Some(&flows[t - 1]), cfg)?;
        }
    }
    Ok(g)
}

/// Errors from segment construction, graph edits, or mining.
#[derive(Clone, Debug, PartialEq)]
pub enum MineError {
    /// Configuration violates its invariants.
    BadConfig {
        /// What is wrong.
        reason: &'static str,
    },
    /// Segments must have at least one foreground pixel.
    EmptyMask,
    /// Score outside `[0, 1]`.
    BadScore {
        /// Offending score.
        score: f64,
    },
    /// Embedding violates its invariants.
    BadEmbedding {
        /// What is wrong.
        reason: &'static str,
    },
    /// A batch of segments spans more than one frame.
    MixedFrames {
        /// Frame the batch should belong to.
        expected: usize,
        /// Frame actually found.
        found: usize,
    },
    /// Mining must advance strictly forward in time.
    NonMonotonicFrame {
        /// Frame being mined.
        frame: usize,
        /// Largest frame already in the graph.
        max: usize,
    },
    /// One flow field is required between consecutive frames.
    FlowCount {
        /// Required count.
        expected: usize,
        /// Actual count.
        got: usize,
    },
    /// A flow field is required to warp a non-empty previous frame.
    MissingFlow {
        /// Frame being mined.
        frame: usize,
    },
    /// Segment id was never issued by this graph.
    UnknownSegment {
        /// Offending id.
        id: usize,
    },
    /// Segment already has an edge on that side.
    EdgeConflict {
        /// Offending id.
        id: usize,
    },
    /// Edges must point forward in time.
    EdgeOrder {
        /// Source id.
        from: usize,
        /// Target id.
        to: usize,
    },
    /// Edges may only connect segments of the same class.
    EdgeClassMismatch {
        /// Source id.
        from: usize,
        /// Target id.
        to: usize,
    },
    /// Mask operation failed.
    Mask(MaskError),
}

impl From<MaskError> for MineError {
    fn from(e: MaskError) -> Self {
        MineError::Mask(e)
    }
}

impl fmt::Display for MineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MineError::BadConfig { reason } => write!(f, "bad mining config: {reason}"),
            MineError::EmptyMask => write!(f, "segment mask is empty"),
            MineError::BadScore { score } => write!(f, "score {score} outside [0, 1]"),
            MineError::BadEmbedding { reason } => write!(f, "bad embedding: {reason}"),
            MineError::MixedFrames { expected, found } => {
                write!(f, "segment from frame {found} in a frame-{expected} batch")
            }
            MineError::NonMonotonicFrame { frame, max } => {
                write!(f, "frame {frame} not past the mined frames (max {max})")
            }
            MineError::FlowCount { expected, got } => {
                write!(f, "{got} flow fields for {expected} frame transitions")
            }
            MineError::MissingFlow { frame } => {
                write!(
                    f,
                    "frame {frame} needs a flow field to warp its predecessors"
                )
            }
            MineError::UnknownSegment { id } => write!(f, "unknown segment id {id}"),
            MineError::EdgeConflict { id } => {
                write!(f, "segment {id} already connected on that side")
            }
            MineError::EdgeOrder { from, to } => {
                write!(f, "edge {from} -> {to} does not advance in time")
            }
            MineError::EdgeClassMismatch { from, to } => {
                write!(f, "edge {from} -> {to} crosses classes")
            }
            MineError::Mask(e) => write!(f, "mask error: {e}"),
        }
    }
}

impl core::error::Error for MineError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            MineError::Mask(e) => Some(e),
            _ => None,
        }
    }
}
