//! Randomised invariant checks across the public surface: mask encoding,
//! assignment optimality against the exhaustive solver, graph structure from
//! mining and linking, loss symmetry, and metric bookkeeping.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use trackmine_core::{
    batch_hard_triplet_loss, batch_hard_triplet_loss_with_grad, brute_force_lap, compute_mots,
    eta_mining, inference_payoff, intersection_stats, link_sequence, majority_tracklet_filter,
    mine_sequence, solve_relaxed_lap, tracklets, ClassId, FlowField, IdSwitchMode,
    IntersectionStats, LinkerConfig, LossBatch, LossDenominator, LossItem, Mask, MinerConfig,
    MotsAnnotation, PayoffMatrix, Segment,
};

// ---------------------------------------------------------------------------
// Strategies
// ---------------------------------------------------------------------------

/// Random mask on a grid of the given bounds (at least 1x1).
fn mask_strategy(max_h: u32, max_w: u32) -> impl Strategy<Value = Mask> {
    (1..=max_h, 1..=max_w)
        .prop_flat_map(|(h, w)| {
            let len = (h * w) as usize;
            (
                Just(h),
                Just(w),
                proptest::collection::vec(proptest::bool::ANY, len),
            )
        })
        .prop_map(|(h, w, bits)| {
            let pixels: Vec<u8> = bits.iter().map(|&b| u8::from(b)).collect();
            Mask::from_pixels(h, w, &pixels).unwrap()
        })
}

/// Two random masks sharing one grid.
fn same_grid_mask_pair(max_h: u32, max_w: u32) -> impl Strategy<Value = (Mask, Mask)> {
    (1..=max_h, 1..=max_w).prop_flat_map(|(h, w)| {
        let len = (h * w) as usize;
        let bits = proptest::collection::vec(proptest::bool::ANY, len);
        (bits.clone(), bits).prop_map(move |(a, b)| {
            let to_mask = |v: Vec<bool>| {
                let px: Vec<u8> = v.iter().map(|&b| u8::from(b)).collect();
                Mask::from_pixels(h, w, &px).unwrap()
            };
            (to_mask(a), to_mask(b))
        })
    })
}

/// Payoff entry on the 1/16 lattice, or forbidden with probability ~1/4.
fn lattice_entry() -> impl Strategy<Value = f64> {
    prop_oneof![
        3 => (-32i32..=32).prop_map(|i| f64::from(i) / 16.0),
        1 => Just(f64::NEG_INFINITY),
    ]
}

/// Random payoff matrix up to 6x6 with lattice entries.
fn matrix_strategy() -> impl Strategy<Value = PayoffMatrix> {
    (0..=6usize, 0..=6usize)
        .prop_flat_map(|(r, c)| {
            (
                Just(r),
                Just(c),
                proptest::collection::vec(lattice_entry(), r * c),
            )
        })
        .prop_map(|(r, c, data)| PayoffMatrix::new(r, c, data).unwrap())
}

/// Unit-norm 2-d embedding from an angle.
fn unit_embedding() -> impl Strategy<Value = Vec<f64>> {
    (0.0..core::f64::consts::TAU).prop_map(|a| vec![a.cos(), a.sin()])
}

/// Frames of disjoint 2x2 blocks on an 8x8 grid, as (slot, annotation) lists;
/// the slot doubles as the per-frame track id and fixes the class.
fn block_frames(frames: usize) -> impl Strategy<Value = Vec<Vec<MotsAnnotation>>> {
    proptest::collection::vec(
        proptest::collection::btree_set(0..16usize, 1..5),
        frames..=frames,
    )
    .prop_map(|frame_slots| {
        frame_slots
            .into_iter()
            .map(|slots| slots.into_iter().map(block_annotation).collect())
            .collect()
    })
}

/// The 2x2 block at slot `s` of the 4x4 slot grid on an 8x8 canvas.
fn block_annotation(slot: usize) -> MotsAnnotation {
    let (bu, bv) = ((slot % 4) as u32 * 2, (slot / 4) as u32 * 2);
    let mut pixels = vec![0u8; 64];
    for du in 0..2 {
        for dv in 0..2 {
            // Column-major flat index on an 8x8 grid.
            pixels[((bv + dv) + 8 * (bu + du)) as usize] = 1;
        }
    }
    MotsAnnotation {
        track: slot as u64,
        class: ClassId((slot % 2) as u32),
        mask: Mask::from_pixels(8, 8, &pixels).unwrap(),
    }
}

// ---------------------------------------------------------------------------
// Mask encoding
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn rle_roundtrip_preserves_pixels(mask in mask_strategy(9, 9)) {
        let pixels = mask.to_pixels();
        let back = Mask::from_pixels(mask.height(), mask.width(), &pixels).unwrap();
        prop_assert_eq!(&back, &mask);

        // The stored encoding is canonical: re-parsing it is the identity.
        let reparsed = Mask::from_runs(mask.height(), mask.width(), mask.runs().to_vec()).unwrap();
        prop_assert_eq!(&reparsed, &mask);
    }

    #[test]
    fn rle_is_canonical(mask in mask_strategy(9, 9)) {
        let runs = mask.runs();
        let total: u64 = runs.iter().map(|&r| u64::from(r)).sum();
        prop_assert_eq!(total, u64::from(mask.height()) * u64::from(mask.width()));
        // Only the leading background run may be empty.
        for (i, &r) in runs.iter().enumerate() {
            prop_assert!(i == 0 || r > 0);
        }
    }

    #[test]
    fn area_counts_foreground(mask in mask_strategy(9, 9)) {
        let count = mask.to_pixels().iter().filter(|&&p| p != 0).count() as u64;
        prop_assert_eq!(mask.area(), count);
        prop_assert_eq!(mask.is_empty(), count == 0);
    }

    #[test]
    fn bbox_contains_all_foreground(mask in mask_strategy(9, 9)) {
        let b = mask.bbox();
        let (h, pixels) = (mask.height(), mask.to_pixels());
        for (i, &p) in pixels.iter().enumerate() {
            if p != 0 {
                let (u, v) = (f64::from(i as u32 / h), f64::from(i as u32 % h));
                // Half-open box: the pixel's unit square fits inside.
                prop_assert!(b.u1 <= u && u + 1.0 <= b.u2);
                prop_assert!(b.v1 <= v && v + 1.0 <= b.v2);
            }
        }
        if !mask.is_empty() {
            prop_assert!(mask.area() as f64 <= b.area());
        }
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in mask_strategy(7, 7)) {
        let b = Mask::from_pixels(
            a.height(),
            a.width(),
            &a.to_pixels().iter().map(|&p| 1 - p).collect::<Vec<_>>(),
        ).unwrap();
        let ab = a.iou(&b).unwrap();
        let ba = b.iou(&a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        if !a.is_empty() {
            prop_assert_eq!(a.iou(&a).unwrap(), 1.0);
            // Complements never overlap.
            prop_assert_eq!(ab, 0.0);
        }
    }

    #[test]
    fn warp_with_zero_flow_is_identity(mask in mask_strategy(9, 9)) {
        let flow = FlowField::zero(mask.height(), mask.width()).unwrap();
        prop_assert_eq!(mask.warp(&flow).unwrap(), mask);
    }

    #[test]
    fn warp_out_of_bounds_clears_everything(mask in mask_strategy(9, 9)) {
        let n = (mask.height() * mask.width()) as usize;
        let flow = FlowField::new(mask.height(), mask.width(), vec![[1e9, 1e9]; n]).unwrap();
        prop_assert!(mask.warp(&flow).unwrap().is_empty());
    }

    #[test]
    fn single_mask_intersection_stats_decompose(
        (s, w) in same_grid_mask_pair(7, 7),
    ) {
        let stats = intersection_stats(&s, &[&w]).unwrap();
        let overlap = s.intersection_area(&w).unwrap();
        prop_assert_eq!(stats.b1, overlap);
        prop_assert_eq!(stats.b2, 0);
        prop_assert_eq!(stats.r, s.area() - overlap);
    }
}

// ---------------------------------------------------------------------------
// Assignment
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn solver_matches_exhaustive_search(m in matrix_strategy()) {
        let fast = solve_relaxed_lap(&m);
        let slow = brute_force_lap(&m).unwrap();
        prop_assert_eq!(fast.pairs(), slow.pairs());
        prop_assert_eq!(fast.total_payoff(), slow.total_payoff());
    }

    #[test]
    fn solver_output_is_a_feasible_matching(m in matrix_strategy()) {
        let a = solve_relaxed_lap(&m);
        let mut rows = BTreeSet::new();
        let mut cols = BTreeSet::new();
        for &(r, c) in a.pairs() {
            prop_assert!(r < m.rows() && c < m.cols());
            prop_assert!(m.get(r, c).is_finite());
            prop_assert!(rows.insert(r), "row {} matched twice", r);
            prop_assert!(cols.insert(c), "column {} matched twice", c);
        }
    }

    #[test]
    fn solution_is_invariant_under_payoff_shift(
        m in matrix_strategy(),
        shift in (-16i32..=16).prop_map(|i| f64::from(i) / 16.0),
    ) {
        let shifted_data: Vec<f64> = (0..m.rows())
            .flat_map(|r| (0..m.cols()).map(move |c| (r, c)))
            .map(|(r, c)| {
                let p = m.get(r, c);
                if p.is_finite() { p + shift } else { p }
            })
            .collect();
        let shifted = PayoffMatrix::new(m.rows(), m.cols(), shifted_data).unwrap();
        // Every full-cardinality matching gains the same total, so the
        // optimal pair set cannot move.
        let base = solve_relaxed_lap(&m);
        let moved = solve_relaxed_lap(&shifted);
        prop_assert_eq!(base.pairs(), moved.pairs());
    }
}

// ---------------------------------------------------------------------------
// Mining
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn eta_matches_its_definition(
        b1 in 0u64..40,
        b2 in 0u64..40,
        r in 0u64..40,
        tau0 in 0.0..20.0f64,
        tau1 in 0.0..20.0f64,
        tau2 in 0.0..4.0f64,
        same_class in proptest::bool::ANY,
    ) {
        prop_assume!(b1 >= b2);
        let stats = IntersectionStats { b1, b2, r };
        let cfg = MinerConfig { tau0, tau1, tau2 };
        let margin_ok = (b1 - b2) as f64 >= tau0;
        let size_ok = b1 as f64 >= tau1;
        let ratio = if r == 0 { f64::INFINITY } else { b1 as f64 / r as f64 };
        let expected = same_class && margin_ok && size_ok && ratio >= tau2;
        let eta = eta_mining(same_class, &stats, &cfg);
        if expected {
            prop_assert_eq!(eta, 0.0);
        } else {
            prop_assert_eq!(eta, f64::NEG_INFINITY);
        }
    }
}

/// Random frames of 4x4 rectangles on a 32x32 grid (possibly overlapping).
fn rect_frames() -> impl Strategy<Value = Vec<Vec<(u32, u32, u32)>>> {
    proptest::collection::vec(
        proptest::collection::vec((0u32..28, 0u32..28, 0u32..2), 0..3),
        2..5,
    )
}

fn rect_segment(frame: usize, u: u32, v: u32, class: u32) -> Segment {
    let mut pixels = vec![0u8; 32 * 32];
    for du in 0..4 {
        for dv in 0..4 {
            pixels[((v + dv) + 32 * (u + du)) as usize] = 1;
        }
    }
    let mask = Mask::from_pixels(32, 32, &pixels).unwrap();
    Segment::new(frame, ClassId(class), mask, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mined_graph_has_sound_structure(specs in rect_frames()) {
        let frames: Vec<Vec<Segment>> = specs
            .iter()
            .enumerate()
            .map(|(t, rects)| {
                rects.iter().map(|&(u, v, c)| rect_segment(t, u, v, c)).collect()
            })
            .collect();
        let flows: Vec<FlowField> = (1..frames.len())
            .map(|_| FlowField::zero(32, 32).unwrap())
            .collect();
        let g = mine_sequence(frames, &flows, &MinerConfig::default()).unwrap();

        // Successor/predecessor links agree, stay within one class, and only
        // ever step to the next frame.
        for id in 0..g.len() {
            if let Some(n) = g.next(id) {
                prop_assert_eq!(g.prev(n), Some(id));
                prop_assert_eq!(g.segment(n).class, g.segment(id).class);
                prop_assert_eq!(g.segment(n).frame, g.segment(id).frame + 1);
            }
            if let Some(p) = g.prev(id) {
                prop_assert_eq!(g.next(p), Some(id));
            }
        }

        // Tracklets partition the nodes into runs of consecutive frames.
        let mut seen = BTreeSet::new();
        for tracklet in tracklets(&g) {
            prop_assert!(!tracklet.is_empty());
            for pair in tracklet.windows(2) {
                prop_assert_eq!(g.segment(pair[1]).frame, g.segment(pair[0]).frame + 1);
            }
            for id in tracklet {
                prop_assert!(seen.insert(id));
            }
        }
        prop_assert_eq!(seen.len(), g.len());
    }
}

// ---------------------------------------------------------------------------
// Linking
// ---------------------------------------------------------------------------

/// Random linking scenario: per-frame lists of embedding angles.
fn link_frames() -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(
        proptest::collection::vec(0.0..core::f64::consts::TAU, 0..3),
        4..8,
    )
}

fn link_segment(frame: usize, angle: f64) -> Segment {
    rect_segment(frame, 0, 0, 0)
        .with_embedding(vec![angle.cos(), angle.sin()])
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linked_tracks_respect_window_and_threshold(specs in link_frames()) {
        let cfg = LinkerConfig {
            tau: 1.5,
            window: 3,
            min_track: 1,
            ..LinkerConfig::default()
        };
        let frames: Vec<Vec<Segment>> = specs
            .iter()
            .enumerate()
            .map(|(t, angles)| angles.iter().map(|&a| link_segment(t, a)).collect())
            .collect();
        let flat: Vec<Segment> = frames.iter().flatten().cloned().collect();
        let tracks = link_sequence(frames, &cfg).unwrap();

        let mut used = BTreeSet::new();
        for (i, track) in tracks.iter().enumerate() {
            prop_assert_eq!(track.id, i as u64);
            prop_assert!(track.len() >= cfg.min_track);
            for pair in track.segments.windows(2) {
                let (a, b) = (&flat[pair[0]], &flat[pair[1]]);
                let gap = b.frame - a.frame;
                prop_assert!(gap >= 1 && gap <= cfg.window);
                // Every accepted link re-passes the payoff gate.
                prop_assert!(inference_payoff(a, b, &cfg).unwrap().is_finite());
            }
            for &s in &track.segments {
                prop_assert!(used.insert(s), "segment {} on two tracks", s);
            }
        }
    }

    #[test]
    fn linking_is_invariant_under_time_shift(specs in link_frames(), offset in 1usize..4) {
        let cfg = LinkerConfig {
            tau: 1.5,
            window: 3,
            min_track: 1,
            ..LinkerConfig::default()
        };
        let base: Vec<Vec<Segment>> = specs
            .iter()
            .enumerate()
            .map(|(t, angles)| angles.iter().map(|&a| link_segment(t, a)).collect())
            .collect();
        let mut shifted: Vec<Vec<Segment>> = (0..offset).map(|_| Vec::new()).collect();
        shifted.extend(specs.iter().enumerate().map(|(t, angles)| {
            angles
                .iter()
                .map(|&a| link_segment(t + offset, a))
                .collect::<Vec<_>>()
        }));
        // Gaps and candidates only depend on frame differences, so padding
        // the front with empty frames changes nothing.
        prop_assert_eq!(link_sequence(base, &cfg).unwrap(), link_sequence(shifted, &cfg).unwrap());
    }
}

// ---------------------------------------------------------------------------
// Embedding losses
// ---------------------------------------------------------------------------

/// Random loss batch of unit 2-d embeddings.
fn loss_batch() -> impl Strategy<Value = Vec<LossItem>> {
    proptest::collection::vec(
        (unit_embedding(), 0u32..2, 0u64..3).prop_map(|(e, c, t)| LossItem {
            embedding: e,
            class: ClassId(c),
            track: t,
        }),
        2..6,
    )
}

proptest! {
    #[test]
    fn triplet_loss_is_permutation_invariant(items in loss_batch(), seed in 0u64..1000) {
        let beta = 0.2;
        let base = batch_hard_triplet_loss(
            &LossBatch::new(items.clone()).unwrap(),
            beta,
            LossDenominator::ValidAnchors,
        );
        prop_assert!(base >= 0.0);

        // Deterministic shuffle driven by the seed.
        let mut permuted = items;
        let n = permuted.len();
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            permuted.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let other = batch_hard_triplet_loss(
            &LossBatch::new(permuted).unwrap(),
            beta,
            LossDenominator::ValidAnchors,
        );
        prop_assert!((base - other).abs() <= 1e-12);
    }

    #[test]
    fn loss_with_gradient_reports_same_loss(items in loss_batch()) {
        let batch = LossBatch::new(items).unwrap();
        let plain = batch_hard_triplet_loss(&batch, 0.2, LossDenominator::ValidAnchors);
        let (loss, grads) = batch_hard_triplet_loss_with_grad(
            &batch,
            0.2,
            LossDenominator::ValidAnchors,
        );
        prop_assert_eq!(loss, plain);
        prop_assert_eq!(grads.len(), batch.len());
        for g in &grads {
            prop_assert_eq!(g.len(), 2);
            prop_assert!(g.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn single_track_batches_have_zero_loss(angles in proptest::collection::vec(0.0..6.28f64, 2..5)) {
        // One track means no valid anchors: nothing to push apart.
        let items: Vec<LossItem> = angles
            .iter()
            .map(|&a| LossItem {
                embedding: vec![a.cos(), a.sin()],
                class: ClassId(0),
                track: 7,
            })
            .collect();
        let batch = LossBatch::new(items).unwrap();
        prop_assert_eq!(
            batch_hard_triplet_loss(&batch, 0.2, LossDenominator::ValidAnchors),
            0.0
        );
    }

    #[test]
    fn majority_filter_matches_recount(
        detections in proptest::collection::vec((0usize..10, 0u64..5), 0..30),
        window_len in 1usize..12,
    ) {
        let kept = majority_tracklet_filter(&detections, window_len);

        let mut frames: BTreeMap<u64, BTreeSet<usize>> = BTreeMap::new();
        for &(frame, track) in &detections {
            frames.entry(track).or_default().insert(frame);
        }
        let expected: Vec<u64> = frames
            .into_iter()
            .filter(|(_, f)| 2 * f.len() > window_len)
            .map(|(t, _)| t)
            .collect();
        prop_assert_eq!(kept, expected);
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn evaluating_ground_truth_against_itself_is_perfect(frames in block_frames(4)) {
        let report = compute_mots(&frames, &frames, IdSwitchMode::LastKnown).unwrap();
        prop_assert_eq!(report.aggregate.accuracy, Some(1.0));
        prop_assert_eq!(report.aggregate.soft_accuracy, Some(1.0));
        prop_assert_eq!(report.aggregate.precision, 1.0);
        prop_assert_eq!(report.aggregate.totals.fp, 0);
        prop_assert_eq!(report.aggregate.totals.ids, 0);
        for scores in report.classes.values() {
            prop_assert_eq!(scores.accuracy, Some(1.0));
        }
    }

    #[test]
    fn report_aggregate_is_the_sum_of_classes(
        gt in block_frames(3),
        pred in block_frames(3),
    ) {
        let report = compute_mots(&gt, &pred, IdSwitchMode::LastKnown).unwrap();
        let mut tp = 0;
        let mut fp = 0;
        let mut ids = 0;
        let mut gt_count = 0;
        let mut iou_sum = 0.0;
        for scores in report.classes.values() {
            tp += scores.totals.tp;
            fp += scores.totals.fp;
            ids += scores.totals.ids;
            gt_count += scores.totals.gt;
            iou_sum += scores.totals.iou_sum;
        }
        prop_assert_eq!(report.aggregate.totals.tp, tp);
        prop_assert_eq!(report.aggregate.totals.fp, fp);
        prop_assert_eq!(report.aggregate.totals.ids, ids);
        prop_assert_eq!(report.aggregate.totals.gt, gt_count);
        prop_assert!((report.aggregate.totals.iou_sum - iou_sum).abs() <= 1e-9);

        // Matched overlap can never exceed the match count, so the soft
        // score is bounded by the strict one.
        let t = &report.aggregate.totals;
        prop_assert!(t.tp <= t.gt);
        prop_assert!(t.iou_sum <= t.tp as f64 + 1e-12);
        if let (Some(acc), Some(soft)) =
            (report.aggregate.accuracy, report.aggregate.soft_accuracy)
        {
            prop_assert!(soft <= acc + 1e-12);
        }
    }
}
