//! Acceptance suite: one test per release criterion, each printing a
//! `[PASS]` line with the measured evidence. Tolerances are pinned here, in
//! code, so a regression cannot hide behind a config change.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tempfile::tempdir;
use trackmine_cli::commands::{eval_bundles, run_siou};
use trackmine_cli::synth::{synth_generate, SynthConfig};
use trackmine_cli::SequenceBundle;
use trackmine_core::{
    batch_hard_triplet_loss, batch_hard_triplet_loss_with_grad, brute_force_lap, compute_mots,
    link_sequence, mask_pool, mine_sequence, siou, solve_relaxed_lap, tracklets, BBox, ClassId,
    FeatureMap, IdSwitchMode, LinkerConfig, LossBatch, LossDenominator, LossItem, Mask,
    MinerConfig, MotsAnnotation, PayoffMatrix, Segment,
};

// ---------------------------------------------------------------------------
// Shared scaffolding
// ---------------------------------------------------------------------------

fn rect_mask(h: u32, w: u32, u: u32, v: u32, rw: u32, rh: u32) -> Mask {
    let mut pixels = vec![0u8; (h * w) as usize];
    for du in 0..rw {
        for dv in 0..rh {
            pixels[((v + dv) + h * (u + du)) as usize] = 1;
        }
    }
    Mask::from_pixels(h, w, &pixels).unwrap()
}

/// Predicted annotations from groups of frame-major segment indices.
fn pred_frames(
    frames: &[Vec<Segment>],
    groups: impl IntoIterator<Item = (u64, Vec<usize>)>,
) -> Vec<Vec<MotsAnnotation>> {
    let flat: Vec<(usize, &Segment)> = frames
        .iter()
        .enumerate()
        .flat_map(|(t, f)| f.iter().map(move |s| (t, s)))
        .collect();
    let mut out = vec![Vec::new(); frames.len()];
    for (id, segments) in groups {
        for g in segments {
            let (t, segment) = flat[g];
            out[t].push(MotsAnnotation {
                track: id,
                class: segment.class,
                mask: segment.mask.clone(),
            });
        }
    }
    out
}

/// Links a generated bundle and scores it against its own ground truth.
fn linking_motsa(bundle: &SequenceBundle, cfg: &LinkerConfig) -> f64 {
    let tracks = link_sequence(bundle.frames.clone(), cfg).unwrap();
    let pred = pred_frames(
        &bundle.frames,
        tracks.into_iter().map(|t| (t.id, t.segments)),
    );
    let report = eval_bundles(bundle, &pred, IdSwitchMode::LastKnown).unwrap();
    report
        .aggregate
        .accuracy
        .expect("synthetic gt is non-empty")
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let mut e: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            for x in e.iter_mut() {
                *x /= norm;
            }
            return e;
        }
    }
}

// ---------------------------------------------------------------------------
// 1: assignment solver vs exhaustive oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_solver_matches_exhaustive_oracle_on_1000_matrices() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC01);
    for case in 0..1000 {
        let rows = rng.gen_range(0..=6);
        let cols = rng.gen_range(0..=6);
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| {
                if rng.gen_bool(0.25) {
                    f64::NEG_INFINITY
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            })
            .collect();
        let m = PayoffMatrix::new(rows, cols, data).unwrap();
        let fast = solve_relaxed_lap(&m);
        let slow = brute_force_lap(&m).unwrap();
        assert_eq!(fast.len(), slow.len(), "cardinality differs, case {case}");
        assert_eq!(
            fast.total_payoff(),
            slow.total_payoff(),
            "total payoff differs, case {case}"
        );
        assert_eq!(fast.pairs(), slow.pairs(), "pair sets differ, case {case}");
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "1000 cases took {elapsed:?}, budget is 10 s"
    );
    println!(
        "[PASS] criterion 1: solver == exhaustive oracle on 1000 random matrices ({} ms)",
        elapsed.as_millis()
    );
}

// ---------------------------------------------------------------------------
// 2: metrics identity and hand-derived scenarios
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_metrics_identity_and_hand_scenarios() {
    // Ground truth scored against itself is perfect on 100 random sequences.
    for k in 0..100u64 {
        let cfg = SynthConfig {
            objects: 1 + (k as usize % 7),
            frames: 2 + (k as usize % 17),
            max_speed: (k % 4) as u32,
            occlusion_prob: if k % 3 == 0 { 0.3 } else { 0.0 },
            occlusion_min: 1,
            occlusion_max: 2,
            noise: 0.02 * (k % 5) as f64,
            seed: 1000 + k,
            ..SynthConfig::default()
        };
        let (bundle, _) = synth_generate(&cfg).unwrap();
        let identity = pred_frames(
            &bundle.frames,
            bundle.frames.iter().enumerate().flat_map(|(t, frame)| {
                let base: usize = bundle.frames[..t].iter().map(Vec::len).sum();
                frame
                    .iter()
                    .enumerate()
                    .map(move |(i, s)| (s.gt_track.unwrap(), vec![base + i]))
            }),
        );
        let report = eval_bundles(&bundle, &identity, IdSwitchMode::LastKnown).unwrap();
        assert_eq!(report.aggregate.accuracy, Some(1.0), "sequence {k}");
        assert_eq!(report.aggregate.soft_accuracy, Some(1.0), "sequence {k}");
        assert_eq!(report.aggregate.precision, 1.0, "sequence {k}");
    }

    // One object over four frames whose predicted identity switches once:
    // MOTSA = (4 - 0 - 1) / 4.
    let block = rect_mask(8, 8, 1, 1, 2, 2);
    let gt: Vec<Vec<MotsAnnotation>> = (0..4)
        .map(|_| {
            vec![MotsAnnotation {
                track: 7,
                class: ClassId(0),
                mask: block.clone(),
            }]
        })
        .collect();
    let switched: Vec<Vec<MotsAnnotation>> = (0..4)
        .map(|t| {
            vec![MotsAnnotation {
                track: if t < 2 { 1 } else { 2 },
                class: ClassId(0),
                mask: block.clone(),
            }]
        })
        .collect();
    let report = compute_mots(&gt, &switched, IdSwitchMode::LastKnown).unwrap();
    assert_eq!(report.aggregate.accuracy, Some(0.75));
    assert_eq!(report.aggregate.soft_accuracy, Some(0.75));

    // Two spurious predictions and no matches: MOTSA = (0 - 2 - 0) / 4.
    let far = rect_mask(8, 8, 5, 5, 2, 2);
    let spurious: Vec<Vec<MotsAnnotation>> = (0..4)
        .map(|t| {
            if t < 2 {
                vec![MotsAnnotation {
                    track: 9,
                    class: ClassId(0),
                    mask: far.clone(),
                }]
            } else {
                Vec::new()
            }
        })
        .collect();
    let report = compute_mots(&gt, &spurious, IdSwitchMode::LastKnown).unwrap();
    assert_eq!(report.aggregate.accuracy, Some(-0.5));

    println!(
        "[PASS] criterion 2: gt-vs-gt is 1.0 on 100 sequences; switch scenario 0.75/0.75; spurious scenario -0.5"
    );
}

// ---------------------------------------------------------------------------
// 3: signed IoU reference values
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_signed_iou_reference_values() {
    let a = BBox::new(0.0, 0.0, 2.0, 2.0);
    assert_eq!(siou(&a, &a), 1.0);

    let overlapping = BBox::new(1.0, 1.0, 3.0, 3.0);
    assert!((siou(&a, &overlapping) - 1.0 / 7.0).abs() <= 1e-12);

    let disjoint = BBox::new(4.0, 4.0, 6.0, 6.0);
    assert!((siou(&a, &disjoint) + 1.0 / 3.0).abs() <= 1e-12);

    // The CLI path (string boxes) agrees.
    assert_eq!(run_siou("0,0,2,2", "0,0,2,2").unwrap(), 1.0);
    assert!((run_siou("0,0,2,2", "1,1,3,3").unwrap() - 1.0 / 7.0).abs() <= 1e-12);

    println!("[PASS] criterion 3: sIoU gives 1, 1/7, and -1/3 on the reference boxes");
}

// ---------------------------------------------------------------------------
// 4: mining fidelity on noise-free sequences
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_mining_recovers_ground_truth_exactly() {
    let cfg = SynthConfig {
        objects: 10,
        frames: 50,
        max_speed: 3,
        occlusion_prob: 0.0,
        noise: 0.0,
        seed: 4,
        ..SynthConfig::default()
    };
    let (bundle, flows) = synth_generate(&cfg).unwrap();
    let graph = mine_sequence(bundle.frames.clone(), &flows, &MinerConfig::default()).unwrap();
    let mined = tracklets(&graph);

    // Every frame lists the 10 objects in band order, so object i's segment
    // at frame t has frame-major index t*10 + i.
    assert_eq!(mined.len(), 10, "one tracklet per object");
    for (i, tracklet) in mined.iter().enumerate() {
        let expected: Vec<usize> = (0..50).map(|t| t * 10 + i).collect();
        assert_eq!(tracklet, &expected, "object {i}");
    }

    let pred = pred_frames(
        &bundle.frames,
        mined.into_iter().enumerate().map(|(i, t)| (i as u64, t)),
    );
    let report = eval_bundles(&bundle, &pred, IdSwitchMode::LastKnown).unwrap();
    assert_eq!(report.aggregate.accuracy, Some(1.0));
    assert_eq!(report.aggregate.soft_accuracy, Some(1.0));

    println!(
        "[PASS] criterion 4: mined tracklets equal the 10 ground-truth tracks over 50 frames; sMOTSA = 1.0"
    );
}

// ---------------------------------------------------------------------------
// 5: occlusion linking with the default window
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_linker_bridges_occlusions_within_the_window() {
    let wide = LinkerConfig::default(); // tau 1, window 12, min_track 5
    let narrow = LinkerConfig {
        window: 1,
        ..LinkerConfig::default()
    };
    let mut wide_scores = Vec::new();
    let mut narrow_scores = Vec::new();
    for k in 0..20u64 {
        let cfg = SynthConfig {
            objects: 6,
            frames: 40,
            max_speed: 2,
            occlusion_prob: 0.08,
            occlusion_min: 3,
            occlusion_max: 3,
            noise: 0.05,
            seed: 500 + k,
            ..SynthConfig::default()
        };
        let (bundle, _) = synth_generate(&cfg).unwrap();
        wide_scores.push(linking_motsa(&bundle, &wide));
        narrow_scores.push(linking_motsa(&bundle, &narrow));
    }
    let wide_mean = mean(&wide_scores);
    let narrow_mean = mean(&narrow_scores);
    assert!(
        wide_mean >= 0.99,
        "window 12 should recover occluded tracks (mean MOTSA {wide_mean})"
    );
    assert!(
        narrow_mean < wide_mean,
        "window 1 should fragment ({narrow_mean} vs {wide_mean})"
    );
    println!(
        "[PASS] criterion 5: mean MOTSA {wide_mean:.4} with window 12 vs {narrow_mean:.4} with window 1 over 20 runs"
    );
}

// ---------------------------------------------------------------------------
// 6: kernel oracles (pooling, triplet loss, gradient)
// ---------------------------------------------------------------------------

fn oracle_loss(items: &[LossItem], beta: f64, denominator: LossDenominator) -> f64 {
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut sum = 0.0;
    let mut valid = 0usize;
    for (i, anchor) in items.iter().enumerate() {
        let mut hardest_pos: Option<f64> = None;
        let mut hardest_neg: Option<f64> = None;
        for (j, other) in items.iter().enumerate() {
            if i == j || other.class != anchor.class {
                continue;
            }
            let d = dist(&anchor.embedding, &other.embedding);
            if other.track == anchor.track {
                hardest_pos = Some(hardest_pos.map_or(d, |h: f64| h.max(d)));
            } else {
                hardest_neg = Some(hardest_neg.map_or(d, |h: f64| h.min(d)));
            }
        }
        if let (Some(p), Some(n)) = (hardest_pos, hardest_neg) {
            valid += 1;
            sum += (p - n + beta).max(0.0);
        }
    }
    let scale = match denominator {
        LossDenominator::ValidAnchors => valid,
        LossDenominator::BatchSize => items.len(),
    };
    if scale == 0 {
        0.0
    } else {
        sum / scale as f64
    }
}

/// True when every hardest-pair selection and every hinge sits at least
/// `margin` away from a tie or sign change, so the loss is differentiable in
/// a neighborhood bigger than the finite-difference step.
fn kink_free(items: &[LossItem], beta: f64, margin: f64) -> bool {
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    for (i, anchor) in items.iter().enumerate() {
        let mut pos: Vec<f64> = Vec::new();
        let mut neg: Vec<f64> = Vec::new();
        for (j, other) in items.iter().enumerate() {
            if i == j || other.class != anchor.class {
                continue;
            }
            let d = dist(&anchor.embedding, &other.embedding);
            if d < margin {
                return false; // coincident embeddings: gradient undefined
            }
            if other.track == anchor.track {
                pos.push(d);
            } else {
                neg.push(d);
            }
        }
        let (Some(&p), Some(&n)) = (
            pos.iter().max_by(|a, b| a.total_cmp(b)),
            neg.iter().min_by(|a, b| a.total_cmp(b)),
        ) else {
            continue;
        };
        if (p - n + beta).abs() < margin {
            return false; // hinge boundary
        }
        if pos.iter().filter(|&&d| p - d < margin).count() > 1 {
            return false; // ambiguous hardest positive
        }
        if neg.iter().filter(|&&d| d - n < margin).count() > 1 {
            return false; // ambiguous hardest negative
        }
    }
    true
}

#[test]
fn criterion_6_kernels_match_their_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC06);

    // Mask pooling equals the per-pixel double loop exactly.
    for case in 0..200 {
        let c = rng.gen_range(1..=4usize);
        let h = rng.gen_range(1..=8u32);
        let w = rng.gen_range(1..=8u32);
        let data: Vec<f64> = (0..c * (h * w) as usize)
            .map(|_| rng.gen_range(-10.0..10.0))
            .collect();
        let features = FeatureMap::new(c, h, w, data).unwrap();
        let mut pixels: Vec<u8> = (0..h * w).map(|_| u8::from(rng.gen_bool(0.5))).collect();
        let force = rng.gen_range(0..pixels.len());
        pixels[force] = 1;
        let mask = Mask::from_pixels(h, w, &pixels).unwrap();

        let pooled = mask_pool(&features, &mask).unwrap();
        let px = mask.to_pixels();
        let area = px.iter().filter(|&&p| p != 0).count() as f64;
        for (ch, &got) in pooled.iter().enumerate() {
            let mut sum = 0.0;
            for v in 0..h {
                for u in 0..w {
                    if px[(v + h * u) as usize] != 0 {
                        sum += features.at(ch, u, v);
                    }
                }
            }
            assert_eq!(got, sum / area, "pooling case {case}, channel {ch}");
        }
    }

    // Batch-hard triplet loss matches the O(B^2) enumeration within 1e-12.
    for case in 0..200 {
        let n = rng.gen_range(2..=8usize);
        let dim = rng.gen_range(1..=4usize);
        let items: Vec<LossItem> = (0..n)
            .map(|_| LossItem {
                embedding: random_unit(&mut rng, dim),
                class: ClassId(rng.gen_range(0..2)),
                track: rng.gen_range(0..4),
            })
            .collect();
        let beta = rng.gen_range(0.05..0.5);
        let batch = LossBatch::new(items.clone()).unwrap();
        for denominator in [LossDenominator::ValidAnchors, LossDenominator::BatchSize] {
            let fast = batch_hard_triplet_loss(&batch, beta, denominator);
            let slow = oracle_loss(&items, beta, denominator);
            assert!(
                (fast - slow).abs() <= 1e-12,
                "loss case {case}: {fast} vs oracle {slow}"
            );
        }
    }

    // Analytic gradient agrees with central differences at 50 kink-free
    // configurations (margin 1e-3 >> step 1e-5 keeps selections stable).
    let beta = 0.2;
    let step = 1e-5;
    let mut accepted = 0;
    let mut attempts = 0;
    while accepted < 50 {
        attempts += 1;
        assert!(attempts < 5000, "could not sample enough kink-free configs");
        let n = rng.gen_range(3..=6usize);
        let items: Vec<LossItem> = (0..n)
            .map(|_| LossItem {
                embedding: random_unit(&mut rng, 3),
                class: ClassId(rng.gen_range(0..2)),
                track: rng.gen_range(0..3),
            })
            .collect();
        if !kink_free(&items, beta, 1e-3) {
            continue;
        }
        let batch = LossBatch::new(items.clone()).unwrap();
        let (_, grads) =
            batch_hard_triplet_loss_with_grad(&batch, beta, LossDenominator::ValidAnchors);
        for i in 0..n {
            for k in 0..3 {
                let mut plus = items.clone();
                plus[i].embedding[k] += step;
                let mut minus = items.clone();
                minus[i].embedding[k] -= step;
                let f_plus = batch_hard_triplet_loss(
                    &LossBatch::new_unchecked(plus),
                    beta,
                    LossDenominator::ValidAnchors,
                );
                let f_minus = batch_hard_triplet_loss(
                    &LossBatch::new_unchecked(minus),
                    beta,
                    LossDenominator::ValidAnchors,
                );
                let fd = (f_plus - f_minus) / (2.0 * step);
                let an = grads[i][k];
                assert!(
                    (fd - an).abs() <= 1e-4 * an.abs().max(fd.abs()).max(1.0),
                    "gradient config {accepted}, item {i}, coord {k}: fd {fd} vs analytic {an}"
                );
            }
        }
        accepted += 1;
    }

    println!(
        "[PASS] criterion 6: pooling exact on 200 cases; loss within 1e-12 on 200 batches; gradient checks at 50 configs"
    );
}

// ---------------------------------------------------------------------------
// 7: term-ablation structure
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_term_ablation_orders_as_expected() {
    let emb_time = LinkerConfig::default();
    let emb_only = LinkerConfig {
        use_time: false,
        ..LinkerConfig::default()
    };
    let siou_only = LinkerConfig {
        use_siou: true,
        use_embedding: false,
        use_time: false,
        ..LinkerConfig::default()
    };
    let mut et_scores = Vec::new();
    let mut e_scores = Vec::new();
    let mut s_scores = Vec::new();
    for k in 0..10u64 {
        let cfg = SynthConfig {
            objects: 5,
            frames: 30,
            max_speed: 2,
            occlusion_prob: 0.3,
            occlusion_min: 2,
            occlusion_max: 3,
            noise: 0.1,
            seed: 700 + k,
            ..SynthConfig::default()
        };
        let (bundle, _) = synth_generate(&cfg).unwrap();
        et_scores.push(linking_motsa(&bundle, &emb_time));
        e_scores.push(linking_motsa(&bundle, &emb_only));
        s_scores.push(linking_motsa(&bundle, &siou_only));
    }
    let et = mean(&et_scores);
    let e = mean(&e_scores);
    let s = mean(&s_scores);
    assert!(
        et >= e - 0.005,
        "embedding+time ({et}) must not fall below embedding-only ({e}) by more than 0.005"
    );
    assert!(
        s < e,
        "overlap-only linking ({s}) must score strictly below embedding-only ({e})"
    );
    println!(
        "[PASS] criterion 7: MOTSA embedding+time {et:.4}, embedding-only {e:.4}, overlap-only {s:.4}"
    );
}

// ---------------------------------------------------------------------------
// 8: CLI determinism
// ---------------------------------------------------------------------------

fn run_cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_trackmine"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn criterion_8_cli_outputs_are_byte_identical_across_runs() {
    let dir = tempdir().unwrap();
    let root = dir.path();
    let s1 = root.join("s1");
    let s2 = root.join("s2");
    for out in [&s1, &s2] {
        let out_str = out.display().to_string();
        run_cli(&[
            "synth",
            "--objects",
            "4",
            "--frames",
            "12",
            "--max-speed",
            "2",
            "--occlusion-prob",
            "0.2",
            "--noise",
            "0.05",
            "--seed",
            "11",
            "--out-dir",
            out_str.as_str(),
        ]);
    }
    assert_eq!(
        read(&s1.join("detections.jsonl")),
        read(&s2.join("detections.jsonl")),
        "synth detections differ between runs"
    );
    for t in 1..12 {
        let name = format!("flows/flow_{t:06}.mfl");
        assert_eq!(
            read(&s1.join(&name)),
            read(&s2.join(&name)),
            "synth flow {t} differs between runs"
        );
    }

    let det = s1.join("detections.jsonl");
    let det_str = det.display().to_string();
    let flows = s1.join("flows");
    let flows_str = flows.display().to_string();

    let mine_out = |n: u32| root.join(format!("mine{n}.tracks.jsonl"));
    for n in [1, 2] {
        let out = mine_out(n).display().to_string();
        run_cli(&["mine", &det_str, "--flows-root", &flows_str, "--out", &out]);
    }
    assert_eq!(
        read(&mine_out(1)),
        read(&mine_out(2)),
        "mine outputs differ between runs"
    );

    let link_out = |n: u32| root.join(format!("link{n}.tracks.jsonl"));
    for n in [1, 2] {
        let out = link_out(n).display().to_string();
        run_cli(&["link", &det_str, "--out", &out]);
    }
    assert_eq!(
        read(&link_out(1)),
        read(&link_out(2)),
        "link outputs differ between runs"
    );

    let report_out = |n: u32| root.join(format!("report{n}.json"));
    let tracks_str = link_out(1).display().to_string();
    let mut eval_stdout = Vec::new();
    for n in [1, 2] {
        let out = report_out(n).display().to_string();
        eval_stdout.push(run_cli(&[
            "eval",
            "--gt",
            &det_str,
            "--pred",
            &det_str,
            "--pred-tracks",
            &tracks_str,
            "--out",
            &out,
            "--stdout",
        ]));
    }
    assert_eq!(
        read(&report_out(1)),
        read(&report_out(2)),
        "eval reports differ between runs"
    );
    assert_eq!(
        eval_stdout[0], eval_stdout[1],
        "eval stdout differs between runs"
    );

    let siou_a = run_cli(&["siou", "--box-a", "0,0,2,2", "--box-b", "1,1,3,3"]);
    let siou_b = run_cli(&["siou", "--box-a", "0,0,2,2", "--box-b", "1,1,3,3"]);
    assert_eq!(siou_a, siou_b, "siou output differs between runs");

    println!(
        "[PASS] criterion 8: synth, mine, link, eval, and siou are byte-identical across runs"
    );
}
