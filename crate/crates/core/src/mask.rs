//! Column-major run-length encoded binary masks, dense backward flow fields,
//! mask warping, and the intersection statistics that gate tracklet mining.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::float;

/// Binary segmentation mask stored as column-major run-length counts.
///
/// Runs alternate between 0-pixels and 1-pixels, always starting with a
/// 0-run (possibly of length zero), and sum to `height * width`. A pixel
/// at column `u`, row `v` has flat index `v + height * u`. Construction
/// normalizes the run list, so equal pixel sets compare equal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    height: u32,
    width: u32,
    runs: Vec<u32>,
}

impl Mask {
    /// Builds a mask from raw runs, validating the alternating-run invariants.
    ///
    /// # Arguments
    /// * `runs` - alternating 0-run/1-run lengths, leading 0-run first.
    pub fn from_runs(height: u32, width: u32, runs: Vec<u32>) -> Result<Self, MaskError> {
        let total = pixel_count(height, width)?;
        let mut sum = 0u64;
        for (i, &run) in runs.iter().enumerate() {
            if run == 0 && i > 0 && runs[i - 1] == 0 {
                return Err(MaskError::ConsecutiveZeroRuns { index: i });
            }
            sum += u64::from(run);
        }
        if sum != total {
            return Err(MaskError::RunSum {
                expected: total,
                got: sum,
            });
        }
        Ok(Self {
            height,
            width,
            runs: normalize_runs(&runs),
        })
    }

    /// Builds a mask from a dense column-major pixel buffer (0 = background).
    pub fn from_pixels(height: u32, width: u32, pixels: &[u8]) -> Result<Self, MaskError> {
        let total = pixel_count(height, width)?;
        if pixels.len() as u64 != total {
            return Err(MaskError::PixelCount {
                expected: total,
                got: pixels.len() as u64,
            });
        }
        let mut runs = Vec::new();
        let mut current = false;
        let mut count = 0u32;
        for &p in pixels {
            let bit = p != 0;
            if bit == current {
                count += 1;
            } else {
                runs.push(count);
                current = bit;
                count = 1;
            }
        }
        if count > 0 {
            runs.push(count);
        }
        Ok(Self {
            height,
            width,
            runs,
        })
    }

    /// Mask containing no foreground pixels.
    pub fn empty(height: u32, width: u32) -> Result<Self, MaskError> {
        let total = pixel_count(height, width)?;
        let runs = if total == 0 {
            Vec::new()
        } else {
            vec![total as u32]
        };
        Ok(Self {
            height,
            width,
            runs,
        })
    }

    /// Grid height in pixels.
    pub fn height(&self) -> u32 {
        self.height
    }

    /// Grid width in pixels.
    pub fn width(&self) -> u32 {
        self.width
    }

    /// Normalized alternating run lengths (leading 0-run first).
    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    /// Decodes to a dense column-major pixel buffer (1 = foreground).
    pub fn to_pixels(&self) -> Vec<u8> {
        let total = (u64::from(self.height) * u64::from(self.width)) as usize;
        let mut out = vec![0u8; total];
        let mut idx = 0usize;
        for (i, &run) in self.runs.iter().enumerate() {
            let run = run as usize;
            if i % 2 == 1 {
                out[idx..idx + run].fill(1);
            }
            idx += run;
        }
        out
    }

    /// Number of foreground pixels.
    pub fn area(&self) -> u64 {
        self.runs
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 2 == 1)
            .map(|(_, &r)| u64::from(r))
            .sum()
    }

    /// True when the mask has no foreground pixels.
    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Foreground pixels shared with `other`, walking both run lists.
    pub fn intersection_area(&self, other: &Mask) -> Result<u64, MaskError> {
        self.check_dims(other)?;
        let total = u64::from(self.height) * u64::from(self.width);
        let mut inter = 0u64;
        let (mut i, mut j) = (0usize, 0usize);
        let (mut left_i, mut left_j) = (0u64, 0u64);
        let mut consumed = 0u64;
        while consumed < total {
            while left_i == 0 {
                left_i = u64::from(self.runs[i]);
                i += 1;
            }
            while left_j == 0 {
                left_j = u64::from(other.runs[j]);
                j += 1;
            }
            let step = left_i.min(left_j);
            // Run i-1 is being consumed; odd run indices hold foreground.
            if i % 2 == 0 && j % 2 == 0 {
                inter += step;
            }
            left_i -= step;
            left_j -= step;
            consumed += step;
        }
        Ok(inter)
    }

    /// Intersection-over-union with `other`; two empty masks give 0.
    pub fn iou(&self, other: &Mask) -> Result<f64, MaskError> {
        let inter = self.intersection_area(other)?;
        let union = self.area() + other.area() - inter;
        if union == 0 {
            return Ok(0.0);
        }
        Ok(inter as f64 / union as f64)
    }

    /// Warps the mask backward through a dense flow field.
    ///
    /// Each output pixel samples `self` at `(round(u + du), round(v + dv))`
    /// with rounding half away from zero; samples outside the grid or with
    /// non-finite flow become background.
    pub fn warp(&self, flow: &FlowField) -> Result<Mask, MaskError> {
        if flow.height() != self.height || flow.width() != self.width {
            return Err(MaskError::DimensionMismatch {
                expected: (self.height, self.width),
                got: (flow.height(), flow.width()),
            });
        }
        let src = self.to_pixels();
        let h = self.height as usize;
        let w = self.width as usize;
        let mut out = vec![0u8; h * w];
        for u in 0..w {
            for v in 0..h {
                let [du, dv] = flow.at(u as u32, v as u32);
                let su = float::round(u as f64 + f64::from(du));
                let sv = float::round(v as f64 + f64::from(dv));
                if su.is_finite()
                    && sv.is_finite()
                    && su >= 0.0
                    && su < w as f64
                    && sv >= 0.0
                    && sv < h as f64
                    && src[sv as usize + h * su as usize] != 0
                {
                    out[v + h * u] = 1;
                }
            }
        }
        Mask::from_pixels(self.height, self.width, &out)
    }

    /// Tight axis-aligned bounding box as half-open pixel coordinates
    /// `(u1, v1, u2, v2)`; the empty mask gives the degenerate `(0,0,0,0)`.
    pub fn bbox(&self) -> BBox {
        let h = u64::from(self.height);
        if h == 0 {
            return BBox::new(0.0, 0.0, 0.0, 0.0);
        }
        let (mut min_u, mut min_v) = (u64::MAX, u64::MAX);
        let (mut max_u, mut max_v) = (0u64, 0u64);
        let mut start = 0u64;
        let mut any = false;
        for (i, &run) in self.runs.iter().enumerate() {
            let run = u64::from(run);
            if i % 2 == 1 && run > 0 {
                any = true;
                let end = start + run - 1;
                let (c0, c1) = (start / h, end / h);
                min_u = min_u.min(c0);
                max_u = max_u.max(c1);
                if c0 == c1 {
                    min_v = min_v.min(start % h);
                    max_v = max_v.max(end % h);
                } else {
                    // The run wraps a column boundary, so it touches both the
                    // bottom row (end of first column) and row 0 (start of next).
                    min_v = 0;
                    max_v = h - 1;
                }
            }
            start += run;
        }
        if !any {
            return BBox::new(0.0, 0.0, 0.0, 0.0);
        }
        BBox::new(
            min_u as f64,
            min_v as f64,
            (max_u + 1) as f64,
            (max_v + 1) as f64,
        )
    }

    fn check_dims(&self, other: &Mask) -> Result<(), MaskError> {
        if self.height != other.height || self.width != other.width {
            return Err(MaskError::DimensionMismatch {
                expected: (self.height, self.width),
                got: (other.height, other.width),
            });
        }
        Ok(())
    }
}

/// Merges zero-length and same-bit runs so equal pixel sets encode equally.
fn normalize_runs(runs: &[u32]) -> Vec<u32> {
    let mut merged: Vec<(bool, u32)> = Vec::with_capacity(runs.len());
    for (i, &run) in runs.iter().enumerate() {
        if run == 0 {
            continue;
        }
        let one = i % 2 == 1;
        match merged.last_mut() {
            Some((bit, n)) if *bit == one => *n += run,
            _ => merged.push((one, run)),
        }
    }
    let mut out = Vec::with_capacity(merged.len() + 1);
    if merged.first().is_some_and(|&(one, _)| one) {
        out.push(0);
    }
    out.extend(merged.iter().map(|&(_, n)| n));
    out
}

fn pixel_count(height: u32, width: u32) -> Result<u64, MaskError> {
    let total = u64::from(height) * u64::from(width);
    if total > u64::from(u32::MAX) {
        return Err(MaskError::GridTooLarge { height, width });
    }
    Ok(total)
}

/// Dense per-pixel backward flow: `at(u, v)` maps a pixel in the current
/// frame to its source position offset `(du, dv)` in the previous frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    height: u32,
    width: u32,
    vectors: Vec<[f32; 2]>,
}

impl FlowField {
    /// Wraps a row-major vector buffer (`v * width + u` indexing).
    pub fn new(height: u32, width: u32, vectors: Vec<[f32; 2]>) -> Result<Self, MaskError> {
        let total = pixel_count(height, width)?;
        if vectors.len() as u64 != total {
            return Err(MaskError::VectorCount {
                expected: total,
                got: vectors.len() as u64,
            });
        }
        Ok(Self {
            height,
            width,
            vectors,
        })
    }

    /// All-zero flow (warping through it is the identity).
    pub fn zero(height: u32, width: u32) -> Result<Self, MaskError> {
        let total = pixel_count(height, width)? as usize;
        Ok(Self {
            height,
            width,
            vectors: vec![[0.0, 0.0]; total],
        })
    }

    /// Grid height in pixels.
    pub fn height(&self) -> u32 {
        self.height
    }

    /// Grid width in pixels.
    pub fn width(&self) -> u32 {
        self.width
    }

    /// Flow vector `(du, dv)` at column `u`, row `v`.
    pub fn at(&self, u: u32, v: u32) -> [f32; 2] {
        self.vectors[(v as usize) * (self.width as usize) + u as usize]
    }

    /// Mutable flow vector at column `u`, row `v`.
    pub fn at_mut(&mut self, u: u32, v: u32) -> &mut [f32; 2] {
        &mut self.vectors[(v as usize) * (self.width as usize) + u as usize]
    }

    /// Row-major vector buffer.
    pub fn vectors(&self) -> &[[f32; 2]] {
        &self.vectors
    }
}

/// Overlap summary of a segment against a set of warped masks:
/// the largest and second-largest intersections and the residual
/// foreground left uncovered by their union.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IntersectionStats {
    /// Largest single intersection area.
    pub b1: u64,
    /// Second-largest single intersection area (0 with fewer than two masks).
    pub b2: u64,
    /// Foreground pixels of the segment not covered by any warped mask.
    pub r: u64,
}

/// Computes [`IntersectionStats`] for segment mask `s` against warped masks.
///
/// An empty list gives `b1 = b2 = 0` and `r = s.area()`.
pub fn intersection_stats(s: &Mask, warped: &[&Mask]) -> Result<IntersectionStats, MaskError> {
    let mut inters: Vec<u64> = Vec::with_capacity(warped.len());
    for w in warped {
        inters.push(s.intersection_area(w)?);
    }
    inters.sort_unstable_by(|a, b| b.cmp(a));
    let b1 = inters.first().copied().unwrap_or(0);
    let b2 = inters.get(1).copied().unwrap_or(0);
    let sp = s.to_pixels();
    let mut union = vec![0u8; sp.len()];
    for w in warped {
        for (acc, px) in union.iter_mut().zip(w.to_pixels()) {
            *acc |= px;
        }
    }
    let covered = sp
        .iter()
        .zip(&union)
        .filter(|&(&a, &b)| a != 0 && b != 0)
        .count() as u64;
    Ok(IntersectionStats {
        b1,
        b2,
        r: s.area() - covered,
    })
}

/// Axis-aligned box with half-open extents `(u1, v1) .. (u2, v2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    /// Left edge (inclusive).
    pub u1: f64,
    /// Top edge (inclusive).
    pub v1: f64,
    /// Right edge (exclusive).
    pub u2: f64,
    /// Bottom edge (exclusive).
    pub v2: f64,
}

impl BBox {
    /// Builds a box from its edges.
    pub const fn new(u1: f64, v1: f64, u2: f64, v2: f64) -> Self {
        Self { u1, v1, u2, v2 }
    }

    /// Box area; degenerate boxes (non-positive extent) give 0.
    pub fn area(&self) -> f64 {
        (self.u2 - self.u1).max(0.0) * (self.v2 - self.v1).max(0.0)
    }

    /// True when the box has no interior.
    pub fn is_empty(&self) -> bool {
        self.u2 <= self.u1 || self.v2 <= self.v1
    }
}

/// Plain intersection-over-union of two boxes; returns 0 when the union is
/// degenerate.
pub fn bbox_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = a.u2.min(b.u2) - a.u1.max(b.u1);
    let ih = a.v2.min(b.v2) - a.v1.max(b.v1);
    let inter = if iw > 0.0 && ih > 0.0 { iw * ih } else { 0.0 };
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// Errors from mask and flow construction or combination.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MaskError {
    /// Two operands live on different grids.
    DimensionMismatch {
        /// Grid of the left operand.
        expected: (u32, u32),
        /// Grid of the right operand.
        got: (u32, u32),
    },
    /// Grid has more pixels than run lengths can address.
    GridTooLarge {
        /// Requested height.
        height: u32,
        /// Requested width.
        width: u32,
    },
    /// Run lengths do not sum to the pixel count.
    RunSum {
        /// Required sum (`height * width`).
        expected: u64,
        /// Actual sum.
        got: u64,
    },
    /// Two zero-length runs in a row make the encoding ambiguous.
    ConsecutiveZeroRuns {
        /// Index of the second zero-length run.
        index: usize,
    },
    /// Pixel buffer length does not match the grid.
    PixelCount {
        /// Required length.
        expected: u64,
        /// Actual length.
        got: u64,
    },
    /// Flow vector buffer length does not match the grid.
    VectorCount {
        /// Required length.
        expected: u64,
        /// Actual length.
        got: u64,
    },
}

impl fmt::Display for MaskError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskError::DimensionMismatch { expected, got } => write!(
                f,
                "grid mismatch: {}x{} vs {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            MaskError::GridTooLarge { height, width } => {
                write!(f, "grid {height}x{width} exceeds addressable pixel count")
            }
            MaskError::RunSum { expected, got } => {
                write!(f, "runs sum to {got}, expected {expected}")
            }
            MaskError::ConsecutiveZeroRuns { index } => {
                write!(f, "consecutive zero-length runs at index {index}")
            }
            MaskError::PixelCount { expected, got } => {
                write!(f, "pixel buffer has {got} entries, expected {expected}")
            }
            MaskError::VectorCount { expected, got } => {
                write!(f, "flow buffer has {got} vectors, expected {expected}")
            }
        }
    }
}

impl core::error::Error for MaskError {}
