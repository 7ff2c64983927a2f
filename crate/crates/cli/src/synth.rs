//! Deterministic synthetic sequences for end-to-end testing: axis-aligned
//! rectangles gliding along disjoint horizontal bands, with exact backward
//! flow, optional occlusion gaps, and noisy one-hot appearance embeddings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;
use trackmine_core::{ClassId, FlowField, Mask, Segment};

use crate::formats::SequenceBundle;

/// Generator parameters. Everything is derived from `seed`; equal configs
/// give byte-identical sequences.
#[derive(Clone, Debug)]
pub struct SynthConfig {
    /// Number of objects (one per horizontal band).
    pub objects: usize,
    /// Number of frames.
    pub frames: usize,
    /// Frame height in pixels.
    pub height: u32,
    /// Frame width in pixels.
    pub width: u32,
    /// Maximum horizontal speed in pixels/frame (0 for static objects);
    /// sampled speeds are clamped so objects never leave the frame.
    pub max_speed: u32,
    /// Per-frame chance that a visible object starts an occlusion.
    pub occlusion_prob: f64,
    /// Shortest occlusion in frames.
    pub occlusion_min: usize,
    /// Longest occlusion in frames.
    pub occlusion_max: usize,
    /// Standard deviation of the Gaussian embedding noise.
    pub noise: f64,
    /// Embedding dimension; 0 means one dimension per object.
    pub embedding_dim: usize,
    /// Class name stamped on every detection.
    pub class_name: String,
    /// RNG seed (mandatory: there is no implicit entropy source).
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            objects: 4,
            frames: 20,
            height: 128,
            width: 256,
            max_speed: 3,
            occlusion_prob: 0.0,
            occlusion_min: 1,
            occlusion_max: 3,
            noise: 0.0,
            embedding_dim: 0,
            class_name: "object".to_owned(),
            seed: 0,
        }
    }
}

/// Invalid generator parameters.
#[derive(Clone, Debug, Error, PartialEq)]
#[error("synth config: {message}")]
pub struct SynthError {
    /// What is wrong.
    pub message: String,
}

fn bad(message: impl Into<String>) -> SynthError {
    SynthError {
        message: message.into(),
    }
}

impl SynthConfig {
    /// Checks ranges and that the geometry fits the frame.
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.objects == 0 {
            return Err(bad("objects must be at least 1"));
        }
        if self.frames == 0 {
            return Err(bad("frames must be at least 1"));
        }
        // Each band needs a rectangle row plus one margin row on each side.
        if (self.height as usize) < 3 * self.objects {
            return Err(bad(format!(
                "height {} is too small for {} bands (needs at least {})",
                self.height,
                self.objects,
                3 * self.objects
            )));
        }
        if self.width < 2 {
            return Err(bad("width must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.occlusion_prob) {
            return Err(bad("occlusion_prob must be within [0, 1]"));
        }
        if self.occlusion_prob > 0.0
            && (self.occlusion_min == 0 || self.occlusion_min > self.occlusion_max)
        {
            return Err(bad("occlusion duration range must satisfy 1 <= min <= max"));
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return Err(bad("noise must be finite and non-negative"));
        }
        if self.class_name.is_empty() {
            return Err(bad("class_name must not be empty"));
        }
        Ok(())
    }
}

/// Per-object trajectory: band geometry plus sampled motion and visibility.
struct ObjectPlan {
    u0: u32,
    v0: u32,
    rect_h: u32,
    rect_w: u32,
    speed: u32,
    visible: Vec<bool>,
}

impl ObjectPlan {
    /// Left edge of the rectangle at frame `t`.
    fn u_at(&self, t: usize) -> u32 {
        self.u0 + self.speed * t as u32
    }
}

/// Generates a sequence: a detections bundle (with ground-truth tracks and
/// embeddings) and one exact backward flow per frame transition.
///
/// Warping an object's frame-`(t-1)` mask through `flows[t-1]` reproduces its
/// frame-`t` mask exactly whenever the object is present in both frames.
pub fn synth_generate(cfg: &SynthConfig) -> Result<(SequenceBundle, Vec<FlowField>), SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let band_h = cfg.height / cfg.objects as u32;
    let dim = if cfg.embedding_dim == 0 {
        cfg.objects
    } else {
        cfg.embedding_dim
    };

    // Motion and visibility are sampled object-major so the stream of draws
    // is a pure function of the config.
    let mut plans = Vec::with_capacity(cfg.objects);
    for i in 0..cfg.objects {
        let rect_h = (band_h - 2).min(12);
        let rect_w = (cfg.width - 1).min(12);
        let steps = cfg.frames as u32 - 1;
        let mut speed = if cfg.max_speed == 0 {
            0
        } else {
            rng.gen_range(1..=cfg.max_speed)
        };
        if steps > 0 {
            speed = speed.min((cfg.width - rect_w) / steps);
        }
        let hi = cfg.width - rect_w - speed * steps;
        let u0 = rng.gen_range(0..=hi);
        let v0 = i as u32 * band_h + 1;

        let mut visible = vec![true; cfg.frames];
        let mut t = 1;
        // The first and last frames stay visible, and occlusions are
        // separated by at least one visible frame, which bounds every gap by
        // occlusion_max + 1 frames.
        while t + 1 < cfg.frames {
            if cfg.occlusion_prob > 0.0 && rng.gen_bool(cfg.occlusion_prob) {
                let dur = rng.gen_range(cfg.occlusion_min..=cfg.occlusion_max);
                let end = (t + dur).min(cfg.frames - 1);
                for slot in visible.iter_mut().take(end).skip(t) {
                    *slot = false;
                }
                t = end + 1;
            } else {
                t += 1;
            }
        }
        plans.push(ObjectPlan {
            u0,
            v0,
            rect_h,
            rect_w,
            speed,
            visible,
        });
    }

    let mut frames: Vec<Vec<Segment>> = vec![Vec::new(); cfg.frames];
    for (i, plan) in plans.iter().enumerate() {
        for t in 0..cfg.frames {
            if !plan.visible[t] {
                continue;
            }
            let mask = rect_mask(
                cfg.height,
                cfg.width,
                plan.u_at(t),
                plan.v0,
                plan.rect_w,
                plan.rect_h,
            );
            let embedding = sample_embedding(&mut rng, dim, i, cfg.noise);
            let segment = Segment::new(t, ClassId(0), mask, 1.0)
                .expect("generated rectangles are valid segments")
                .with_embedding(embedding)
                .expect("generated embeddings are unit vectors")
                .with_gt_track(i as u64);
            frames[t].push(segment);
        }
    }

    // Backward flow for frame t points every pixel of the union of an
    // object's old and new rectangles at its previous position; painting only
    // the new rectangle would leave a ghost trail over revealed background.
    let mut flows = Vec::with_capacity(cfg.frames.saturating_sub(1));
    for t in 1..cfg.frames {
        let mut flow = FlowField::zero(cfg.height, cfg.width).expect("validated frame size");
        for plan in &plans {
            let from = plan.u_at(t - 1);
            let to = plan.u_at(t);
            for u in from..(to + plan.rect_w) {
                for v in plan.v0..(plan.v0 + plan.rect_h) {
                    *flow.at_mut(u, v) = [-(plan.speed as f32), 0.0];
                }
            }
        }
        flows.push(flow);
    }

    let bundle = SequenceBundle {
        name: format!("synth-{:016x}", cfg.seed),
        frame_size: Some((cfg.height, cfg.width)),
        frames,
        class_names: vec![cfg.class_name.clone()],
    };
    Ok((bundle, flows))
}

/// Axis-aligned rectangle mask with its top-left pixel at `(u, v)`.
fn rect_mask(height: u32, width: u32, u: u32, v: u32, rect_w: u32, rect_h: u32) -> Mask {
    debug_assert!(u + rect_w <= width && v + rect_h <= height);
    let mut pixels = vec![0u8; (height * width) as usize];
    for du in 0..rect_w {
        for dv in 0..rect_h {
            // Column-major flat index.
            pixels[((v + dv) + height * (u + du)) as usize] = 1;
        }
    }
    Mask::from_pixels(height, width, &pixels).expect("rectangle fits the grid")
}

/// One-hot base vector for object `i` plus Gaussian noise, re-normalized.
fn sample_embedding(rng: &mut ChaCha8Rng, dim: usize, object: usize, noise: f64) -> Vec<f64> {
    loop {
        let mut e = vec![0.0f64; dim];
        e[object % dim] = 1.0;
        if noise > 0.0 {
            for x in e.iter_mut() {
                let n: f64 = rng.sample(StandardNormal);
                *x += noise * n;
            }
        }
        let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            for x in e.iter_mut() {
                *x /= norm;
            }
            return e;
        }
        // Astronomically unlikely: the noise cancelled the base vector.
    }
}
