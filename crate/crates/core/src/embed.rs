//! Embedding kernels: mask-pooling of dense feature maps, batch-hard
//! triplet loss with its analytic gradient, and the majority filter that
//! picks the tracklets a training window should keep.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::float;
use crate::mask::{Mask, MaskError};
use crate::ClassId;

/// Dense feature map over an image grid, one f64 per channel and pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: u32,
    width: u32,
    data: Vec<f64>,
}

impl FeatureMap {
    /// Wraps a buffer laid out channel-major, then row-major within a
    /// channel: index `c * h * w + v * w + u`. All values must be finite.
    pub fn new(
        channels: usize,
        height: u32,
        width: u32,
        data: Vec<f64>,
    ) -> Result<Self, EmbedError> {
        let expected = channels * (height as usize) * (width as usize);
        if data.len() != expected {
            return Err(EmbedError::DataLength {
                expected,
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        if channels == 0 || height == 0 || width == 0 {
            return Err(EmbedError::EmptyFeatureMap);
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Number of channels.
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Grid height in pixels.
    pub fn height(&self) -> u32 {
        self.height
    }

    /// Grid width in pixels.
    pub fn width(&self) -> u32 {
        self.width
    }

    /// Value of channel `c` at column `u`, row `v`.
    pub fn at(&self, c: usize, u: u32, v: u32) -> f64 {
        let hw = (self.height as usize) * (self.width as usize);
        self.data[c * hw + (v as usize) * (self.width as usize) + u as usize]
    }
}

/// Per-channel mean of the feature map under the mask's foreground.
///
/// Summation order is fixed (channels, then rows, then columns) so results
/// are bit-reproducible. The mask must be non-empty and on the map's grid.
pub fn mask_pool(features: &FeatureMap, mask: &Mask) -> Result<Vec<f64>, EmbedError> {
    if mask.height() != features.height || mask.width() != features.width {
        return Err(EmbedError::GridMismatch {
            expected: (features.height, features.width),
            got: (mask.height(), mask.width()),
        });
    }
    let area = mask.area();
    if area == 0 {
        return Err(EmbedError::EmptyMask);
    }
    let pixels = mask.to_pixels();
    let h = features.height;
    let w = features.width;
    let mut out = Vec::with_capacity(features.channels);
    for c in 0..features.channels {
        let mut sum = 0.0;
        for v in 0..h {
            for u in 0..w {
                if pixels[(v + h * u) as usize] != 0 {
                    sum += features.at(c, u, v);
                }
            }
        }
        out.push(sum / area as f64);
    }
    Ok(out)
}

/// One training example: an embedding with its class and track labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LossItem {
    /// Embedding vector.
    pub embedding: Vec<f64>,
    /// Class label.
    pub class: ClassId,
    /// Track label; items of one track are positives for each other.
    pub track: u64,
}

/// A batch of loss items with consistent embedding dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBatch {
    items: Vec<LossItem>,
}

impl LossBatch {
    /// Validates that all embeddings are finite, share one dimension, and
    /// are unit-norm to within 1e-6.
    pub fn new(items: Vec<LossItem>) -> Result<Self, EmbedError> {
        let dim = items.first().map_or(0, |i| i.embedding.len());
        for item in &items {
            if item.embedding.is_empty() {
                return Err(EmbedError::EmptyEmbedding);
            }
            if item.embedding.len() != dim {
                return Err(EmbedError::DimMismatch {
                    left: dim,
                    right: item.embedding.len(),
                });
            }
            if item.embedding.iter().any(|x| !x.is_finite()) {
                return Err(EmbedError::NonFinite);
            }
            let norm = float::sqrt(item.embedding.iter().map(|x| x * x).sum());
            if float::abs(norm - 1.0) > 1e-6 {
                return Err(EmbedError::NormViolation { norm });
            }
        }
        Ok(Self { items })
    }

    /// Wraps items without validating; the caller owns the invariants.
    /// (Gradient checks perturb embeddings off the unit sphere, which the
    /// validating constructor would reject.)
    pub fn new_unchecked(items: Vec<LossItem>) -> Self {
        Self { items }
    }

    /// Batch items.
    pub fn items(&self) -> &[LossItem] {
        &self.items
    }

    /// Number of items.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    /// True for a batch with no items.
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Indices of anchor `i`'s positives (same class and track, excluding `i`)
/// and negatives (same class, different track).
pub fn matching_sets(items: &[LossItem], i: usize) -> (Vec<usize>, Vec<usize>) {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (j, item) in items.iter().enumerate() {
        // Both sets require the anchor's class; the track decides the side.
        if j == i || item.class != items[i].class {
            continue;
        }
        if item.track == items[i].track {
            positives.push(j);
        } else {
            negatives.push(j);
        }
    }
    (positives, negatives)
}

/// What the summed anchor losses are divided by.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossDenominator {
    /// Anchors that actually have both a positive and a negative.
    #[default]
    ValidAnchors,
    /// Total batch size, counting anchors that contribute nothing.
    BatchSize,
}

/// Batch-hard triplet loss: each valid anchor contributes
/// `max(hardest_positive - hardest_negative + beta, 0)`, where the hardest
/// positive is the farthest same-track item and the hardest negative the
/// closest same-class other-track item. Anchors without both sets are
/// skipped; an empty denominator gives 0.
pub fn batch_hard_triplet_loss(batch: &LossBatch, beta: f64, denominator: LossDenominator) -> f64 {
    batch_hard_terms(batch, beta).evaluate(batch.len(), denominator)
}

/// [`batch_hard_triplet_loss`] plus its gradient with respect to every
/// embedding (one vector per batch item, zero for items that only appear in
/// inactive terms).
///
/// At the hinge boundary and at coincident embeddings the loss is not
/// differentiable; this returns the one-sided derivative that treats an
/// exactly-zero hinge as inactive and skips zero-distance directions.
pub fn batch_hard_triplet_loss_with_grad(
    batch: &LossBatch,
    beta: f64,
    denominator: LossDenominator,
) -> (f64, Vec<Vec<f64>>) {
    let items = batch.items();
    let dim = items.first().map_or(0, |i| i.embedding.len());
    let mut grads = vec![vec![0.0; dim]; items.len()];
    let terms = batch_hard_terms(batch, beta);
    let loss = terms.evaluate(batch.len(), denominator);
    let scale = match denominator {
        LossDenominator::ValidAnchors => terms.valid,
        LossDenominator::BatchSize => batch.len(),
    };
    if scale == 0 {
        return (loss, grads);
    }
    let inv = 1.0 / scale as f64;
    for term in &terms.active {
        let a = &items[term.anchor].embedding;
        // d||a - p|| / da = (a - p) / ||a - p||; the positive distance grows
        // the loss, the negative distance shrinks it.
        let p = &items[term.positive].embedding;
        if term.pos_dist > 0.0 {
            for k in 0..dim {
                let g = (a[k] - p[k]) / term.pos_dist * inv;
                grads[term.anchor][k] += g;
                grads[term.positive][k] -= g;
            }
        }
        let n = &items[term.negative].embedding;
        if term.neg_dist > 0.0 {
            for k in 0..dim {
                let g = (a[k] - n[k]) / term.neg_dist * inv;
                grads[term.anchor][k] -= g;
                grads[term.negative][k] += g;
            }
        }
    }
    (loss, grads)
}

struct ActiveTerm {
    anchor: usize,
    positive: usize,
    negative: usize,
    pos_dist: f64,
    neg_dist: f64,
}

struct HardTerms {
    sum: f64,
    valid: usize,
    active: Vec<ActiveTerm>,
}

impl HardTerms {
    fn evaluate(&self, batch_len: usize, denominator: LossDenominator) -> f64 {
        let scale = match denominator {
            LossDenominator::ValidAnchors => self.valid,
            LossDenominator::BatchSize => batch_len,
        };
        if scale == 0 {
            0.0
        } else {
            self.sum / scale as f64
        }
    }
}

fn batch_hard_terms(batch: &LossBatch, beta: f64) -> HardTerms {
    let items = batch.items();
    let mut sum = 0.0;
    let mut valid = 0;
    let mut active = Vec::new();
    for i in 0..items.len() {
        let (positives, negatives) = matching_sets(items, i);
        if positives.is_empty() || negatives.is_empty() {
            continue;
        }
        valid += 1;
        // Hardest positive: maximum distance; ties keep the first index.
        let (p, pos_dist) = positives
            .iter()
            .map(|&j| (j, float::euclid(&items[i].embedding, &items[j].embedding)))
            .fold((positives[0], f64::NEG_INFINITY), |acc, (j, d)| {
                if d > acc.1 {
                    (j, d)
                } else {
                    acc
                }
            });
        let (n, neg_dist) = negatives
            .iter()
            .map(|&j| (j, float::euclid(&items[i].embedding, &items[j].embedding)))
            .fold((negatives[0], f64::INFINITY), |acc, (j, d)| {
                if d < acc.1 {
                    (j, d)
                } else {
                    acc
                }
            });
        let hinge = pos_dist - neg_dist + beta;
        if hinge > 0.0 {
            sum += hinge;
            active.push(ActiveTerm {
                anchor: i,
                positive: p,
                negative: n,
                pos_dist,
                neg_dist,
            });
        }
    }
    HardTerms { sum, valid, active }
}

/// Keeps the tracklets that cover a strict majority of a training window.
///
/// `detections` pairs each in-window detection's frame index with its
/// tracklet id; a tracklet is kept when twice its number of distinct frames
/// exceeds `window_len`. Returns the kept ids, ascending.
pub fn majority_tracklet_filter(detections: &[(usize, u64)], window_len: usize) -> Vec<u64> {
    let mut frames_of: BTreeMap<u64, BTreeSet<usize>> = BTreeMap::new();
    for &(frame, tracklet) in detections {
        frames_of.entry(tracklet).or_default().insert(frame);
    }
    frames_of
        .into_iter()
        .filter(|(_, frames)| 2 * frames.len() > window_len)
        .map(|(tracklet, _)| tracklet)
        .collect()
}

/// Errors from feature maps, pooling, or loss batches.
#[derive(Clone, Debug, PartialEq)]
pub enum EmbedError {
    /// Buffer length does not match channels x height x width.
    DataLength {
        /// Required length.
        expected: usize,
        /// Actual length.
        got: usize,
    },
    /// A value is NaN or infinite.
    NonFinite,
    /// Feature maps need at least one channel and one pixel.
    EmptyFeatureMap,
    /// Mask grid does not match the feature map.
    GridMismatch {
        /// Feature-map grid.
        expected: (u32, u32),
        /// Mask grid.
        got: (u32, u32),
    },
    /// Pooling under an empty mask is undefined.
    EmptyMask,
    /// Embeddings must be non-empty.
    EmptyEmbedding,
    /// Embedding dimensions differ within a batch.
    DimMismatch {
        /// Dimension of the first item.
        left: usize,
        /// Offending dimension.
        right: usize,
    },
    /// Embedding is not unit-norm.
    NormViolation {
        /// Actual norm.
        norm: f64,
    },
    /// Mask operation failed.
    Mask(MaskError),
}

impl From<MaskError> for EmbedError {
    fn from(e: MaskError) -> Self {
        EmbedError::Mask(e)
    }
}

impl fmt::Display for EmbedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbedError::DataLength { expected, got } => {
                write!(f, "feature buffer has {got} entries, expected {expected}")
            }
            EmbedError::NonFinite => write!(f, "non-finite value"),
            EmbedError::EmptyFeatureMap => write!(f, "feature map has no channels or pixels"),
            EmbedError::GridMismatch { expected, got } => write!(
                f,
                "mask grid {}x{} does not match feature map {}x{}",
                got.0, got.1, expected.0, expected.1
            ),
            EmbedError::EmptyMask => write!(f, "cannot pool under an empty mask"),
            EmbedError::EmptyEmbedding => write!(f, "embedding is empty"),
            EmbedError::DimMismatch { left, right } => {
                write!(f, "embedding dimensions differ: {left} vs {right}")
            }
            EmbedError::NormViolation { norm } => {
                write!(f, "embedding norm {norm} is not 1 within 1e-6")
            }
            EmbedError::Mask(e) => write!(f, "mask error: {e}"),
        }
    }
}

impl core::error::Error for EmbedError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            EmbedError::Mask(e) => Some(e),
            _ => None,
        }
    }
}
