//! Core building blocks for tracking-by-detection pipelines: run-length
//! encoded masks with optical-flow warping, a relaxed linear-assignment
//! solver with exact tie-breaking, overlap-gated tracklet mining, windowed
//! track linking, embedding kernels (mask pooling, batch-hard triplet loss),
//! and CLEAR-style MOT/MOTS evaluation.
//!
//! The crate is `no_std`-compatible (requires `alloc`); the default `std`
//! feature only switches float intrinsics and error-trait plumbing.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![deny(missing_docs)]

extern crate alloc;

mod float;

pub mod embed;
pub mod lap;
pub mod linker;
pub mod mask;
pub mod metrics;
pub mod miner;

/// Dense numeric class label. Callers map class names onto these ids once at
/// ingestion; everything downstream compares ids only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(pub u32);

pub use embed::{
    batch_hard_triplet_loss, batch_hard_triplet_loss_with_grad, majority_tracklet_filter,
    mask_pool, EmbedError, FeatureMap, LossBatch, LossDenominator, LossItem,
};
pub use lap::{brute_force_lap, solve_relaxed_lap, Assignment, LapError, PayoffMatrix};
pub use linker::{inference_payoff, link_sequence, siou, LinkError, LinkerConfig, Track};
pub use mask::{bbox_iou, intersection_stats, BBox, FlowField, IntersectionStats, Mask, MaskError};
pub use metrics::{
    compute_mot, compute_mots, ClassScores, FrameTally, IdSwitchMode, MetricsError, MetricsReport,
    MotAnnotation, MotsAnnotation,
};
pub use miner::{
    eta_mining, mine_sequence, mine_step, mining_payoff, tracklets, MineError, MinerConfig,
    Segment, TrackGraph,
};
