//! CLEAR-style tracking evaluation for masks (MOTSA, sMOTSA, MOTSP) and
//! boxes (MOTA, MOTP): per-frame matching, identity-switch bookkeeping, and
//! sequence-level per-class plus aggregate scores.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::mask::{bbox_iou, BBox, Mask, MaskError};
use crate::{solve_relaxed_lap, ClassId, PayoffMatrix};

/// Match counts for one frame (or their sum over a sequence).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FrameTally {
    /// Matched ground-truth objects.
    pub tp: u64,
    /// Predictions matching nothing.
    pub fp: u64,
    /// Matches whose ground-truth track changed predicted identity.
    pub ids: u64,
    /// Ground-truth objects present.
    pub gt: u64,
    /// Sum of the matched pairs' overlaps.
    pub iou_sum: f64,
}

impl FrameTally {
    /// Adds another tally into this one.
    pub fn accumulate(&mut self, other: &FrameTally) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.ids += other.ids;
        self.gt += other.gt;
        self.iou_sum += other.iou_sum;
    }
}

/// How far back a ground-truth track's previous identity is remembered when
/// counting identity switches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum IdSwitchMode {
    /// Compare against the most recent match, however long ago (a track that
    /// reappears under a new identity after a gap counts as a switch).
    #[default]
    LastKnown,
    /// Compare only against the immediately preceding frame.
    PreviousFrame,
}

/// Ground-truth or predicted object in mask form.
#[derive(Clone, Debug, PartialEq)]
pub struct MotsAnnotation {
    /// Track id, unique per (class, frame, side).
    pub track: u64,
    /// Class label.
    pub class: ClassId,
    /// Segmentation mask.
    pub mask: Mask,
}

/// Ground-truth or predicted object in box form.
#[derive(Clone, Debug, PartialEq)]
pub struct MotAnnotation {
    /// Track id, unique per (class, frame, side).
    pub track: u64,
    /// Class label.
    pub class: ClassId,
    /// Bounding box.
    pub bbox: BBox,
}

/// Result of matching one frame: `(gt index, pred index, overlap)` pairs and
/// the frame's aggregate tally.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMatch {
    /// Matched pairs, ascending in ground-truth index.
    pub pairs: Vec<(usize, usize, f64)>,
    /// Counts summed over all classes in the frame.
    pub tally: FrameTally,
}

/// Cross-frame evaluation state: which predicted identity each ground-truth
/// track carried, for identity-switch counting and box-mode carry-over.
#[derive(Clone, Debug)]
pub struct EvalState {
    mode: IdSwitchMode,
    last_pred: BTreeMap<(ClassId, u64), u64>,
    prev_frame_pred: BTreeMap<(ClassId, u64), u64>,
}

impl EvalState {
    /// Fresh state for a sequence.
    pub fn new(mode: IdSwitchMode) -> Self {
        Self {
            mode,
            last_pred: BTreeMap::new(),
            prev_frame_pred: BTreeMap::new(),
        }
    }

    fn switch_reference(&self, key: &(ClassId, u64)) -> Option<u64> {
        match self.mode {
            IdSwitchMode::LastKnown => self.last_pred.get(key).copied(),
            IdSwitchMode::PreviousFrame => self.prev_frame_pred.get(key).copied(),
        }
    }

    fn finish_frame(&mut self, matches: BTreeMap<(ClassId, u64), u64>) {
        for (k, v) in &matches {
            self.last_pred.insert(*k, *v);
        }
        self.prev_frame_pred = matches;
    }
}

/// Which input a validation error refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// The ground-truth annotations.
    GroundTruth,
    /// The predicted annotations.
    Prediction,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::GroundTruth => write!(f, "ground truth"),
            Side::Prediction => write!(f, "prediction"),
        }
    }
}

fn check_unique_tracks<T>(
    side: Side,
    items: &[T],
    key: impl Fn(&T) -> (ClassId, u64),
) -> Result<(), MetricsError> {
    let mut seen = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        let k = key(item);
        if seen.insert(k, i).is_some() {
            return Err(MetricsError::DuplicateTrack {
                side,
                class: k.0,
                track: k.1,
            });
        }
    }
    Ok(())
}

fn check_disjoint(side: Side, masks: &[&Mask]) -> Result<(), MetricsError> {
    for i in 0..masks.len() {
        for j in (i + 1)..masks.len() {
            if masks[i].intersection_area(masks[j])? > 0 {
                return Err(MetricsError::OverlappingMasks {
                    side,
                    first: i,
                    second: j,
                });
            }
        }
    }
    Ok(())
}

/// Matches one frame of mask annotations.
///
/// Masks within each side must be pairwise disjoint, which makes the
/// IoU > 0.5 matching unique; overlaps are rejected. Identity switches are
/// counted against `state`, which the call updates.
pub fn mots_match_frame(
    state: &mut EvalState,
    gt: &[MotsAnnotation],
    pred: &[MotsAnnotation],
) -> Result<FrameMatch, MetricsError> {
    let (pairs, tallies) = mots_frame_classed(state, gt, pred)?;
    Ok(FrameMatch {
        pairs,
        tally: sum_tallies(&tallies),
    })
}

type ClassedMatch = (Vec<(usize, usize, f64)>, BTreeMap<ClassId, FrameTally>);

fn mots_frame_classed(
    state: &mut EvalState,
    gt: &[MotsAnnotation],
    pred: &[MotsAnnotation],
) -> Result<ClassedMatch, MetricsError> {
    check_unique_tracks(Side::GroundTruth, gt, |a| (a.class, a.track))?;
    check_unique_tracks(Side::Prediction, pred, |a| (a.class, a.track))?;
    let gt_masks: Vec<&Mask> = gt.iter().map(|a| &a.mask).collect();
    let pred_masks: Vec<&Mask> = pred.iter().map(|a| &a.mask).collect();
    check_disjoint(Side::GroundTruth, &gt_masks)?;
    check_disjoint(Side::Prediction, &pred_masks)?;

    // Disjointness makes > 0.5 matches exclusive in both directions, so a
    // first-hit scan already yields the unique matching.
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    let mut gt_used = vec![false; gt.len()];
    for (pi, p) in pred.iter().enumerate() {
        for (gi, g) in gt.iter().enumerate() {
            if gt_used[gi] || g.class != p.class {
                continue;
            }
            let iou = g.mask.iou(&p.mask)?;
            if iou > 0.5 {
                gt_used[gi] = true;
                pairs.push((gi, pi, iou));
                break;
            }
        }
    }
    pairs.sort_unstable_by_key(|&(gi, ..)| gi);

    let tallies = tally_by_class(
        state,
        &pairs,
        gt.iter().map(|a| (a.class, a.track)),
        pred.iter().map(|a| (a.class, a.track)),
    );
    Ok((pairs, tallies))
}

/// Matches one frame of box annotations.
///
/// Pairs matched in the previous frame persist while they still overlap
/// above 0.5; the remaining objects are matched by the relaxed assignment
/// over IoU, with sub-threshold and cross-class pairs forbidden. Identity
/// switches are counted against `state`, which the call updates.
pub fn clear_mot_match_frame(
    state: &mut EvalState,
    gt: &[MotAnnotation],
    pred: &[MotAnnotation],
) -> Result<FrameMatch, MetricsError> {
    let (pairs, tallies) = mot_frame_classed(state, gt, pred)?;
    Ok(FrameMatch {
        pairs,
        tally: sum_tallies(&tallies),
    })
}

fn mot_frame_classed(
    state: &mut EvalState,
    gt: &[MotAnnotation],
    pred: &[MotAnnotation],
) -> Result<ClassedMatch, MetricsError> {
    check_unique_tracks(Side::GroundTruth, gt, |a| (a.class, a.track))?;
    check_unique_tracks(Side::Prediction, pred, |a| (a.class, a.track))?;
    for (side, boxes) in [
        (
            Side::GroundTruth,
            gt.iter().map(|a| a.bbox).collect::<Vec<_>>(),
        ),
        (Side::Prediction, pred.iter().map(|a| a.bbox).collect()),
    ] {
        for (i, b) in boxes.iter().enumerate() {
            if ![b.u1, b.v1, b.u2, b.v2].iter().all(|x| x.is_finite()) {
                return Err(MetricsError::BadBox { side, index: i });
            }
        }
    }

    let pred_by_key: BTreeMap<(ClassId, u64), usize> = pred
        .iter()
        .enumerate()
        .map(|(i, a)| ((a.class, a.track), i))
        .collect();

    // Carry over still-valid pairs from the previous frame first.
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    let mut gt_used = vec![false; gt.len()];
    let mut pred_used = vec![false; pred.len()];
    for (gi, g) in gt.iter().enumerate() {
        let Some(&prev_pred) = state.prev_frame_pred.get(&(g.class, g.track)) else {
            continue;
        };
        let Some(&pi) = pred_by_key.get(&(g.class, prev_pred)) else {
            continue;
        };
        if pred_used[pi] {
            continue;
        }
        let iou = bbox_iou(&g.bbox, &pred[pi].bbox);
        if iou > 0.5 {
            gt_used[gi] = true;
            pred_used[pi] = true;
            pairs.push((gi, pi, iou));
        }
    }

    // Assign the rest by maximum IoU.
    let free_gt: Vec<usize> = (0..gt.len()).filter(|&i| !gt_used[i]).collect();
    let free_pred: Vec<usize> = (0..pred.len()).filter(|&i| !pred_used[i]).collect();
    let mut payoffs = Vec::with_capacity(free_gt.len() * free_pred.len());
    for &gi in &free_gt {
        for &pi in &free_pred {
            let iou = bbox_iou(&gt[gi].bbox, &pred[pi].bbox);
            payoffs.push(if gt[gi].class == pred[pi].class && iou > 0.5 {
                iou
            } else {
                f64::NEG_INFINITY
            });
        }
    }
    let matrix =
        PayoffMatrix::new(free_gt.len(), free_pred.len(), payoffs).expect("IoU payoffs are finite");
    for &(i, j) in solve_relaxed_lap(&matrix).pairs() {
        let (gi, pi) = (free_gt[i], free_pred[j]);
        pairs.push((gi, pi, bbox_iou(&gt[gi].bbox, &pred[pi].bbox)));
    }
    pairs.sort_unstable_by_key(|&(gi, ..)| gi);

    let tallies = tally_by_class(
        state,
        &pairs,
        gt.iter().map(|a| (a.class, a.track)),
        pred.iter().map(|a| (a.class, a.track)),
    );
    Ok((pairs, tallies))
}

/// Splits a frame's matches into per-class tallies (true positives and
/// identity switches belong to the pair's class, false positives to the
/// prediction's class) and advances the identity state.
fn tally_by_class(
    state: &mut EvalState,
    pairs: &[(usize, usize, f64)],
    gt_keys: impl Iterator<Item = (ClassId, u64)>,
    pred_keys: impl Iterator<Item = (ClassId, u64)>,
) -> BTreeMap<ClassId, FrameTally> {
    let gt_keys: Vec<(ClassId, u64)> = gt_keys.collect();
    let pred_keys: Vec<(ClassId, u64)> = pred_keys.collect();
    let mut tallies: BTreeMap<ClassId, FrameTally> = BTreeMap::new();
    for &(class, _) in &gt_keys {
        tallies.entry(class).or_default().gt += 1;
    }
    let mut pred_matched = vec![false; pred_keys.len()];
    let mut frame_matches: BTreeMap<(ClassId, u64), u64> = BTreeMap::new();
    for &(gi, pi, iou) in pairs {
        pred_matched[pi] = true;
        let key = gt_keys[gi];
        let pred_track = pred_keys[pi].1;
        let tally = tallies.entry(key.0).or_default();
        tally.tp += 1;
        tally.iou_sum += iou;
        if state
            .switch_reference(&key)
            .is_some_and(|prev| prev != pred_track)
        {
            tally.ids += 1;
        }
        frame_matches.insert(key, pred_track);
    }
    for (pi, &(class, _)) in pred_keys.iter().enumerate() {
        if !pred_matched[pi] {
            tallies.entry(class).or_default().fp += 1;
        }
    }
    state.finish_frame(frame_matches);
    tallies
}

fn sum_tallies(tallies: &BTreeMap<ClassId, FrameTally>) -> FrameTally {
    let mut total = FrameTally::default();
    for t in tallies.values() {
        total.accumulate(t);
    }
    total
}

/// Scores derived from a tally.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassScores {
    /// Summed counts behind the scores.
    pub totals: FrameTally,
    /// MOTSA / MOTA: `(tp - fp - ids) / gt`; undefined without ground truth.
    pub accuracy: Option<f64>,
    /// sMOTSA: `(iou_sum - fp - ids) / gt`; mask mode only.
    pub soft_accuracy: Option<f64>,
    /// MOTSP / MOTP: `iou_sum / tp`, defined as 0 when nothing matched.
    pub precision: f64,
}

impl ClassScores {
    fn from_tally(totals: FrameTally, soft: bool) -> Self {
        let accuracy = (totals.gt > 0)
            .then(|| (totals.tp as f64 - totals.fp as f64 - totals.ids as f64) / totals.gt as f64);
        let soft_accuracy = (soft && totals.gt > 0)
            .then(|| (totals.iou_sum - totals.fp as f64 - totals.ids as f64) / totals.gt as f64);
        let precision = if totals.tp > 0 {
            totals.iou_sum / totals.tp as f64
        } else {
            0.0
        };
        Self {
            totals,
            accuracy,
            soft_accuracy,
            precision,
        }
    }
}

/// Sequence-level evaluation: per-class scores plus the aggregate over all
/// classes.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    /// Scores per class (classes seen in either input).
    pub classes: BTreeMap<ClassId, ClassScores>,
    /// Scores over all classes combined.
    pub aggregate: ClassScores,
}

fn compute<G, P, E>(
    gt_frames: &[Vec<G>],
    pred_frames: &[Vec<P>],
    mode: IdSwitchMode,
    soft: bool,
    mut match_frame: E,
) -> Result<MetricsReport, MetricsError>
where
    E: FnMut(&mut EvalState, &[G], &[P]) -> Result<ClassedMatch, MetricsError>,
{
    if gt_frames.len() != pred_frames.len() {
        return Err(MetricsError::FrameCount {
            gt: gt_frames.len(),
            pred: pred_frames.len(),
        });
    }
    let mut state = EvalState::new(mode);
    let mut totals: BTreeMap<ClassId, FrameTally> = BTreeMap::new();
    for (frame, (gt, pred)) in gt_frames.iter().zip(pred_frames).enumerate() {
        let (_, tallies) =
            match_frame(&mut state, gt, pred).map_err(|e| MetricsError::AtFrame {
                frame,
                source: Box::new(e),
            })?;
        for (class, tally) in tallies {
            totals.entry(class).or_default().accumulate(&tally);
        }
    }
    let aggregate = sum_tallies(&totals);
    if aggregate.gt == 0 {
        return Err(MetricsError::EmptyGroundTruth);
    }
    Ok(MetricsReport {
        classes: totals
            .into_iter()
            .map(|(c, t)| (c, ClassScores::from_tally(t, soft)))
            .collect(),
        aggregate: ClassScores::from_tally(aggregate, soft),
    })
}

/// Evaluates mask tracking over a sequence (MOTSA, sMOTSA, MOTSP).
///
/// `gt_frames[t]` and `pred_frames[t]` describe frame `t`; the sequence must
/// contain at least one ground-truth object.
pub fn compute_mots(
    gt_frames: &[Vec<MotsAnnotation>],
    pred_frames: &[Vec<MotsAnnotation>],
    mode: IdSwitchMode,
) -> Result<MetricsReport, MetricsError> {
    compute(gt_frames, pred_frames, mode, true, mots_frame_classed)
}

/// Evaluates box tracking over a sequence (MOTA, MOTP).
pub fn compute_mot(
    gt_frames: &[Vec<MotAnnotation>],
    pred_frames: &[Vec<MotAnnotation>],
    mode: IdSwitchMode,
) -> Result<MetricsReport, MetricsError> {
    compute(gt_frames, pred_frames, mode, false, mot_frame_classed)
}

/// Errors from evaluation inputs.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricsError {
    /// Ground truth and predictions cover different frame counts.
    FrameCount {
        /// Ground-truth frame count.
        gt: usize,
        /// Prediction frame count.
        pred: usize,
    },
    /// The sequence has no ground-truth objects, so accuracy is undefined.
    EmptyGroundTruth,
    /// A (class, track) pair appears twice in one frame.
    DuplicateTrack {
        /// Offending side.
        side: Side,
        /// Class of the duplicate.
        class: ClassId,
        /// Track id of the duplicate.
        track: u64,
    },
    /// Two masks of one side overlap.
    OverlappingMasks {
        /// Offending side.
        side: Side,
        /// Index of the first mask.
        first: usize,
        /// Index of the second mask.
        second: usize,
    },
    /// A bounding box has non-finite coordinates.
    BadBox {
        /// Offending side.
        side: Side,
        /// Index of the box.
        index: usize,
    },
    /// Mask operation failed.
    Mask(MaskError),
    /// Error raised while matching a specific frame.
    AtFrame {
        /// Frame index.
        frame: usize,
        /// Underlying error.
        source: Box<MetricsError>,
    },
}

impl From<MaskError> for MetricsError {
    fn from(e: MaskError) -> Self {
        MetricsError::Mask(e)
    }
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::FrameCount { gt, pred } => {
                write!(f, "{gt} ground-truth frames vs {pred} prediction frames")
            }
            MetricsError::EmptyGroundTruth => {
                write!(f, "sequence has no ground-truth objects")
            }
            MetricsError::DuplicateTrack { side, class, track } => {
                write!(
                    f,
                    "duplicate {side} track {track} for class {} in one frame",
                    class.0
                )
            }
            MetricsError::OverlappingMasks {
                side,
                first,
                second,
            } => {
                write!(f, "{side} masks {first} and {second} overlap")
            }
            MetricsError::BadBox { side, index } => {
                write!(f, "{side} box {index} has non-finite coordinates")
            }
            MetricsError::Mask(e) => write!(f, "mask error: {e}"),
            MetricsError::AtFrame { frame, source } => write!(f, "frame {frame}: {source}"),
        }
    }
}

impl core::error::Error for MetricsError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            MetricsError::Mask(e) => Some(e),
            MetricsError::AtFrame { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}
