//! Drivers behind the CLI subcommands, usable directly from tests: mining,
//! linking, evaluation, sequence generation, and the sIoU helper.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;
use trackmine_core::{
    compute_mot, compute_mots, link_sequence, mine_sequence, siou, tracklets, BBox, ClassId,
    IdSwitchMode, LinkError, LinkerConfig, MetricsError, MetricsReport, MineError, MinerConfig,
    MotAnnotation, MotsAnnotation, Segment, Track,
};

use crate::config::ConfigError;
use crate::formats::{
    load_detections, load_flow_dir, load_tracks, write_report, write_tracks, FormatError,
    ReportDoc, SequenceBundle,
};
use crate::synth::{synth_generate, SynthConfig, SynthError};

/// Any failure surfaced by a subcommand.
#[derive(Debug, Error)]
pub enum CliError {
    /// File format problem.
    #[error(transparent)]
    Format(#[from] FormatError),
    /// Config file problem.
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// Generator parameter problem.
    #[error(transparent)]
    Synth(#[from] SynthError),
    /// Mining failure.
    #[error("mining: {0}")]
    Mine(#[from] MineError),
    /// Linking failure.
    #[error("linking: {0}")]
    Link(#[from] LinkError),
    /// Evaluation failure.
    #[error("evaluation: {0}")]
    Metrics(#[from] MetricsError),
    /// Bad command-line usage or inconsistent inputs.
    #[error("{0}")]
    Validation(String),
}

impl CliError {
    /// Process exit code: 2 for I/O failures, 1 for validation failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Format(FormatError::Io { .. }) | CliError::Config(ConfigError::Io { .. }) => {
                2
            }
            _ => 1,
        }
    }
}

/// Where a per-sequence output file goes.
#[derive(Clone, Debug)]
pub enum OutSpec {
    /// Exact output path; only valid for a single input.
    File(PathBuf),
    /// Directory receiving `<input stem>.tracks.jsonl` per input.
    Dir(PathBuf),
}

impl OutSpec {
    /// Resolves `--out` / `--out-dir` flags against the input count.
    pub fn resolve(
        out: Option<PathBuf>,
        out_dir: Option<PathBuf>,
        inputs: usize,
    ) -> Result<Self, CliError> {
        match (out, out_dir) {
            (Some(_), Some(_)) => Err(CliError::Validation(
                "--out and --out-dir are mutually exclusive".into(),
            )),
            (Some(path), None) if inputs == 1 => Ok(OutSpec::File(path)),
            (Some(_), None) => Err(CliError::Validation(
                "--out requires exactly one input; use --out-dir for several".into(),
            )),
            (None, Some(dir)) => Ok(OutSpec::Dir(dir)),
            (None, None) => Err(CliError::Validation(
                "one of --out or --out-dir is required".into(),
            )),
        }
    }

    fn path_for(&self, input: &Path) -> PathBuf {
        match self {
            OutSpec::File(path) => path.clone(),
            OutSpec::Dir(dir) => {
                let stem = input
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "sequence".to_owned());
                dir.join(format!("{stem}.tracks.jsonl"))
            }
        }
    }
}

/// Mines tracklets for each detections file; sequences run in parallel.
pub fn run_mine(
    inputs: &[PathBuf],
    flows_root: &Path,
    cfg: &MinerConfig,
    out: &OutSpec,
) -> Result<(), CliError> {
    inputs
        .par_iter()
        .map(|input| mine_one(input, flows_root, cfg, &out.path_for(input)))
        .collect()
}

fn mine_one(
    input: &Path,
    flows_root: &Path,
    cfg: &MinerConfig,
    out: &Path,
) -> Result<(), CliError> {
    let bundle = load_detections(input)?;
    // Several sequences may share a flow root through per-stem subdirectories.
    let nested = flows_root.join(&bundle.name);
    let flow_dir = if nested.is_dir() { &nested } else { flows_root };
    let flows = load_flow_dir(flow_dir, bundle.frames.len())?;
    let frame_lens: Vec<usize> = bundle.frames.iter().map(Vec::len).collect();
    let graph = mine_sequence(bundle.frames, &flows, cfg)?;
    let tracks: Vec<Track> = tracklets(&graph)
        .into_iter()
        .enumerate()
        .map(|(id, segments)| Track {
            id: id as u64,
            segments,
        })
        .collect();
    write_tracks(&bundle.name, &frame_lens, &tracks, out)?;
    Ok(())
}

/// Links detections into tracks for each file; sequences run in parallel.
pub fn run_link(inputs: &[PathBuf], cfg: &LinkerConfig, out: &OutSpec) -> Result<(), CliError> {
    inputs
        .par_iter()
        .map(|input| link_one(input, cfg, &out.path_for(input)))
        .collect()
}

fn link_one(input: &Path, cfg: &LinkerConfig, out: &Path) -> Result<(), CliError> {
    let bundle = load_detections(input)?;
    let frame_lens: Vec<usize> = bundle.frames.iter().map(Vec::len).collect();
    let tracks = link_sequence(bundle.frames, cfg)?;
    write_tracks(&bundle.name, &frame_lens, &tracks, out)?;
    Ok(())
}

/// Evaluation mode: masks or boxes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    /// Mask tracking (MOTSA, sMOTSA, MOTSP).
    Mots,
    /// Box tracking (MOTA, MOTP).
    Mot,
}

/// Evaluates predictions against ground truth and renders the report.
///
/// Ground truth is a detections file whose every record carries `gt_track`;
/// predictions are a detections file plus the track-assignment file emitted
/// by `mine` or `link`. Unassigned predicted detections are ignored.
pub fn run_eval(
    gt_path: &Path,
    pred_path: &Path,
    tracks_path: &Path,
    mode: EvalMode,
    ids_mode: IdSwitchMode,
) -> Result<ReportDoc, CliError> {
    let gt = load_detections(gt_path)?;
    let pred = load_detections(pred_path)?;
    let assignments = load_tracks(tracks_path)?;

    // Classes from both files share one table, keyed by name.
    let mut class_names = gt.class_names.clone();
    let pred_remap: Vec<ClassId> = pred
        .class_names
        .iter()
        .map(|name| match class_names.iter().position(|c| c == name) {
            Some(i) => ClassId(i as u32),
            None => {
                class_names.push(name.clone());
                ClassId(class_names.len() as u32 - 1)
            }
        })
        .collect();

    let frames = gt.frames.len().max(pred.frames.len());
    let mut gt_frames: Vec<Vec<(u64, &Segment)>> = vec![Vec::new(); frames];
    for (t, frame) in gt.frames.iter().enumerate() {
        for (i, segment) in frame.iter().enumerate() {
            let Some(track) = segment.gt_track else {
                return Err(CliError::Validation(format!(
                    "{}: record (frame {t}, det_index {i}) lacks gt_track",
                    gt_path.display()
                )));
            };
            gt_frames[t].push((track, segment));
        }
    }
    let mut pred_frames: Vec<Vec<(u64, &Segment)>> = vec![Vec::new(); frames];
    for record in &assignments.records {
        let segment = pred
            .frames
            .get(record.frame)
            .and_then(|f| f.get(record.det_index))
            .ok_or_else(|| {
                CliError::Validation(format!(
                    "{}: assignment (frame {}, det_index {}) has no matching detection",
                    tracks_path.display(),
                    record.frame,
                    record.det_index
                ))
            })?;
        pred_frames[record.frame].push((record.track_id, segment));
    }

    let report = match mode {
        EvalMode::Mots => {
            let gt_in = annotate_masks(&gt_frames, None);
            let pred_in = annotate_masks(&pred_frames, Some(&pred_remap));
            compute_mots(&gt_in, &pred_in, ids_mode)?
        }
        EvalMode::Mot => {
            let gt_in = annotate_boxes(&gt_frames, None);
            let pred_in = annotate_boxes(&pred_frames, Some(&pred_remap));
            compute_mot(&gt_in, &pred_in, ids_mode)?
        }
    };
    let mode_name = match mode {
        EvalMode::Mots => "mots",
        EvalMode::Mot => "mot",
    };
    Ok(ReportDoc::new(mode_name, &report, &class_names))
}

fn remap(class: ClassId, table: Option<&[ClassId]>) -> ClassId {
    match table {
        Some(map) => map[class.0 as usize],
        None => class,
    }
}

fn annotate_masks(
    frames: &[Vec<(u64, &Segment)>],
    table: Option<&[ClassId]>,
) -> Vec<Vec<MotsAnnotation>> {
    frames
        .iter()
        .map(|frame| {
            frame
                .iter()
                .map(|&(track, segment)| MotsAnnotation {
                    track,
                    class: remap(segment.class, table),
                    mask: segment.mask.clone(),
                })
                .collect()
        })
        .collect()
}

fn annotate_boxes(
    frames: &[Vec<(u64, &Segment)>],
    table: Option<&[ClassId]>,
) -> Vec<Vec<MotAnnotation>> {
    frames
        .iter()
        .map(|frame| {
            frame
                .iter()
                .map(|&(track, segment)| MotAnnotation {
                    track,
                    class: remap(segment.class, table),
                    bbox: segment.bbox,
                })
                .collect()
        })
        .collect()
}

/// Writes a report and/or prints it, per the `eval` output flags.
pub fn emit_report(doc: &ReportDoc, out: Option<&Path>, to_stdout: bool) -> Result<(), CliError> {
    if out.is_none() && !to_stdout {
        return Err(CliError::Validation(
            "eval needs --out, --stdout, or both".into(),
        ));
    }
    if let Some(path) = out {
        write_report(doc, path)?;
    }
    if to_stdout {
        print!("{}", doc.to_json());
    }
    Ok(())
}

/// Generates a synthetic sequence on disk: `detections.jsonl` plus a `flows/`
/// directory of per-transition flow files.
pub fn run_synth(cfg: &SynthConfig, out_dir: &Path) -> Result<(), CliError> {
    let (bundle, flows) = synth_generate(cfg)?;
    crate::formats::write_detections(&bundle, &out_dir.join("detections.jsonl"))?;
    let flow_dir = out_dir.join("flows");
    for (k, flow) in flows.iter().enumerate() {
        crate::formats::write_flow(flow, &flow_dir.join(crate::formats::flow_file_name(k + 1)))?;
    }
    Ok(())
}

/// Parses `u1,v1,u2,v2` into a box.
pub fn parse_box(text: &str) -> Result<BBox, CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(CliError::Validation(format!(
            "box {text:?} must be u1,v1,u2,v2"
        )));
    }
    let mut vals = [0.0f64; 4];
    for (slot, part) in vals.iter_mut().zip(&parts) {
        *slot = part.parse().map_err(|_| {
            CliError::Validation(format!("box coordinate {part:?} is not a number"))
        })?;
        if !slot.is_finite() {
            return Err(CliError::Validation(format!(
                "box coordinate {part:?} is not finite"
            )));
        }
    }
    Ok(BBox::new(vals[0], vals[1], vals[2], vals[3]))
}

/// Signed IoU of two boxes given as `u1,v1,u2,v2` strings.
pub fn run_siou(box_a: &str, box_b: &str) -> Result<f64, CliError> {
    Ok(siou(&parse_box(box_a)?, &parse_box(box_b)?))
}

/// Convenience for tests: evaluates two in-memory bundles in MOTS mode.
pub fn eval_bundles(
    gt: &SequenceBundle,
    pred_frames: &[Vec<MotsAnnotation>],
    ids_mode: IdSwitchMode,
) -> Result<MetricsReport, CliError> {
    let frames = gt.frames.len().max(pred_frames.len());
    let mut gt_in: Vec<Vec<MotsAnnotation>> = vec![Vec::new(); frames];
    for (t, frame) in gt.frames.iter().enumerate() {
        for segment in frame {
            gt_in[t].push(MotsAnnotation {
                track: segment.gt_track.ok_or_else(|| {
                    CliError::Validation("ground-truth bundle lacks gt_track labels".into())
                })?,
                class: segment.class,
                mask: segment.mask.clone(),
            });
        }
    }
    let mut pred_in = pred_frames.to_vec();
    pred_in.resize_with(frames, Vec::new);
    Ok(compute_mots(&gt_in, &pred_in, ids_mode)?)
}
