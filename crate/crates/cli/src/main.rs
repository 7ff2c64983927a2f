//! `trackmine`: mine tracklets from detections and flow, link them into
//! tracks, evaluate against ground truth, and generate synthetic sequences.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use trackmine_cli::commands::{
    emit_report, run_eval, run_link, run_mine, run_siou, run_synth, OutSpec,
};
use trackmine_cli::config::FileConfig;
use trackmine_cli::synth::SynthConfig;
use trackmine_cli::{CliError, EvalMode};
use trackmine_core::IdSwitchMode;

#[derive(Parser)]
#[command(
    name = "trackmine",
    version,
    about = "Tracklet mining, linking, and MOTS evaluation"
)]
struct Cli {
    /// Worker threads for multi-sequence commands (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build tracklets from detections and backward flow.
    Mine {
        /// Detection files (JSON Lines), one sequence each.
        #[arg(required = true)]
        detections: Vec<PathBuf>,
        /// Directory of flow files, or of per-sequence subdirectories named
        /// after each detections file stem.
        #[arg(long)]
        flows_root: PathBuf,
        /// Optional TOML config supplying thresholds.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Decisiveness margin between the two best overlaps, in pixels.
        #[arg(long)]
        tau0: Option<f64>,
        /// Minimum best overlap, in pixels.
        #[arg(long)]
        tau1: Option<f64>,
        /// Minimum overlap-to-residual ratio.
        #[arg(long)]
        tau2: Option<f64>,
        /// Output tracks file (single input only).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output directory: one `<stem>.tracks.jsonl` per input.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Link detections (with embeddings) into tracks.
    Link {
        /// Detection files (JSON Lines), one sequence each.
        #[arg(required = true)]
        detections: Vec<PathBuf>,
        /// Optional TOML config supplying parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Maximum combined distance accepted for a link.
        #[arg(long)]
        tau: Option<f64>,
        /// How many frames back a track stays open.
        #[arg(long)]
        window: Option<usize>,
        /// Minimum surviving track length.
        #[arg(long)]
        min_track: Option<usize>,
        /// Comma list of payoff terms: siou, embedding, time.
        #[arg(long)]
        terms: Option<String>,
        /// Output tracks file (single input only).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output directory: one `<stem>.tracks.jsonl` per input.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Score predictions against ground truth.
    Eval {
        /// Ground-truth detections (every record needs `gt_track`).
        #[arg(long)]
        gt: PathBuf,
        /// Predicted detections.
        #[arg(long)]
        pred: PathBuf,
        /// Track assignments for the predicted detections.
        #[arg(long)]
        pred_tracks: PathBuf,
        /// Mask metrics (mots) or box metrics (mot).
        #[arg(long, value_enum, default_value_t = ModeArg::Mots)]
        mode: ModeArg,
        /// How far back a track's previous identity is remembered.
        #[arg(long, value_enum, default_value_t = IdsModeArg::LastKnown)]
        ids_mode: IdsModeArg,
        /// Report file to write.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also print the report to standard output.
        #[arg(long)]
        stdout: bool,
    },
    /// Generate a synthetic sequence (detections + flows) on disk.
    Synth {
        /// Number of objects.
        #[arg(long, default_value_t = 4)]
        objects: usize,
        /// Number of frames.
        #[arg(long, default_value_t = 20)]
        frames: usize,
        /// Frame height in pixels.
        #[arg(long, default_value_t = 128)]
        height: u32,
        /// Frame width in pixels.
        #[arg(long, default_value_t = 256)]
        width: u32,
        /// Maximum speed in pixels/frame (0 for static objects).
        #[arg(long, default_value_t = 3)]
        max_speed: u32,
        /// Per-frame chance that a visible object becomes occluded.
        #[arg(long, default_value_t = 0.0)]
        occlusion_prob: f64,
        /// Shortest occlusion in frames.
        #[arg(long, default_value_t = 1)]
        occlusion_min: usize,
        /// Longest occlusion in frames.
        #[arg(long, default_value_t = 3)]
        occlusion_max: usize,
        /// Gaussian noise added to the one-hot embeddings.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Embedding dimension (0: one per object).
        #[arg(long, default_value_t = 0)]
        embedding_dim: usize,
        /// Class name stamped on every detection.
        #[arg(long, default_value = "object")]
        class_name: String,
        /// RNG seed; equal seeds give byte-identical outputs.
        #[arg(long)]
        seed: u64,
        /// Directory receiving `detections.jsonl` and `flows/`.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print the signed IoU of two boxes.
    Siou {
        /// First box as `u1,v1,u2,v2`.
        #[arg(long)]
        box_a: String,
        /// Second box as `u1,v1,u2,v2`.
        #[arg(long)]
        box_b: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Mots,
    Mot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum IdsModeArg {
    LastKnown,
    PreviousFrame,
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Mine {
            detections,
            flows_root,
            config,
            tau0,
            tau1,
            tau2,
            out,
            out_dir,
        } => {
            let cfg = FileConfig::load(config.as_deref())?.miner_config(tau0, tau1, tau2)?;
            let out = OutSpec::resolve(out, out_dir, detections.len())?;
            run_mine(&detections, &flows_root, &cfg, &out)
        }
        Command::Link {
            detections,
            config,
            tau,
            window,
            min_track,
            terms,
            out,
            out_dir,
        } => {
            let cfg = FileConfig::load(config.as_deref())?.linker_config(
                tau,
                window,
                min_track,
                terms.as_deref(),
            )?;
            let out = OutSpec::resolve(out, out_dir, detections.len())?;
            run_link(&detections, &cfg, &out)
        }
        Command::Eval {
            gt,
            pred,
            pred_tracks,
            mode,
            ids_mode,
            out,
            stdout,
        } => {
            let mode = match mode {
                ModeArg::Mots => EvalMode::Mots,
                ModeArg::Mot => EvalMode::Mot,
            };
            let ids_mode = match ids_mode {
                IdsModeArg::LastKnown => IdSwitchMode::LastKnown,
                IdsModeArg::PreviousFrame => IdSwitchMode::PreviousFrame,
            };
            let doc = run_eval(&gt, &pred, &pred_tracks, mode, ids_mode)?;
            emit_report(&doc, out.as_deref(), stdout)
        }
        Command::Synth {
            objects,
            frames,
            height,
            width,
            max_speed,
            occlusion_prob,
            occlusion_min,
            occlusion_max,
            noise,
            embedding_dim,
            class_name,
            seed,
            out_dir,
        } => {
            let cfg = SynthConfig {
                objects,
                frames,
                height,
                width,
                max_speed,
                occlusion_prob,
                occlusion_min,
                occlusion_max,
                noise,
                embedding_dim,
                class_name,
                seed,
            };
            run_synth(&cfg, &out_dir)
        }
        Command::Siou { box_a, box_b } => {
            println!("{}", run_siou(&box_a, &box_b)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful outcomes; usage mistakes are
            // validation failures.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
