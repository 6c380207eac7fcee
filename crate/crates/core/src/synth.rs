//! Synthetic scene generation: scripted silhouette sequences with
//! waiting/starting/moving phases and optional passing-pedestrian
//! distractors, so the full pipeline can be trained and evaluated without
//! recorded footage.
//!
//! A scene is rendered from a deterministic script. The cyclist is a
//! composition of ellipses (head, torso, bike body, two wheels, and an
//! antagonistic pair of knee blobs). During the waiting and starting
//! phases the whole figure jitters by a bounded integer offset; from the
//! starting boundary the knee pair protrudes symmetrically, which leaves
//! the blob centroid untouched; from the moving boundary the whole figure
//! translates. Pedestrian distractors follow a straight path behind or in
//! front of the cyclist and are composited with a painter's ownership
//! buffer so occlusion is exact.

use std::f64::consts::TAU;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::Phase;
use crate::silhouette::{binarize, BinaryFrame, ClassMapFrame, SceneMeta};

pub const CLASS_PERSON: u8 = 15;
pub const CLASS_BICYCLE: u8 = 2;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene script: {0}")]
    InvalidScript(String),
    #[error("invalid split ratios: {0}")]
    BadRatios(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// Mask values are 0/1 and the foreground set is `[1]`.
    Binary,
    /// Person and bicycle class ids, exercising class-map binarization.
    ClassMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthOrder {
    Behind,
    InFront,
}

/// Rider and bicycle geometry in pixels, relative to the head center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CyclistShape {
    pub head_r: i32,
    pub torso_rx: i32,
    pub torso_ry: i32,
    pub bike_rx: i32,
    pub bike_ry: i32,
    pub wheel_r: i32,
    /// Wheel center offset from the head x, both sides.
    pub wheel_dx: i32,
    /// Wheel center offset below the bike-body center.
    pub wheel_dy: i32,
    pub knee_r: i32,
    /// Resting knee offset from the head x, both sides.
    pub knee_dx: i32,
}

impl Default for CyclistShape {
    fn default() -> Self {
        Self {
            head_r: 6,
            torso_rx: 10,
            torso_ry: 16,
            bike_rx: 24,
            bike_ry: 6,
            wheel_r: 8,
            wheel_dx: 18,
            wheel_dy: 6,
            knee_r: 4,
            knee_dx: 16,
        }
    }
}

impl CyclistShape {
    fn torso_dy(&self) -> i32 {
        self.head_r + self.torso_ry
    }

    fn bike_dy(&self) -> i32 {
        self.torso_dy() + self.torso_ry + self.bike_ry
    }

    /// Horizontal half-extent including knees pushed out by `limb`.
    fn half_width(&self, limb: i32) -> i32 {
        self.bike_rx
            .max(self.wheel_dx + self.wheel_r)
            .max(self.knee_dx + limb + self.knee_r)
    }

    fn extent_above(&self) -> i32 {
        self.head_r
    }

    fn extent_below(&self) -> i32 {
        self.bike_dy() + self.wheel_dy + self.wheel_r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistractorScript {
    pub depth: DepthOrder,
    /// Body-center start position; the path is `start + velocity * t`.
    pub start_x: f64,
    pub start_y: f64,
    pub vx: f64,
    pub vy: f64,
    pub body_rx: f64,
    pub body_ry: f64,
    pub head_r: f64,
}

/// Complete deterministic description of one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScript {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub frame_rate_hz: f64,
    pub n_waiting: u32,
    pub n_starting: u32,
    pub n_moving: u32,
    /// Base head-center position; must be aligned to `head_label_grid`.
    pub head_x: i32,
    pub head_y: i32,
    pub shape: CyclistShape,
    /// Integer jitter offsets are drawn from the disk of this radius
    /// during the waiting and starting phases.
    pub jitter_amplitude: f64,
    /// Peak knee protrusion in pixels from the starting boundary on.
    pub limb_amplitude: f64,
    /// Knee oscillation period in frames.
    pub limb_period: u32,
    /// Whole-figure translation in pixels/frame from the moving boundary.
    pub velocity: (f64, f64),
    pub distractor: Option<DistractorScript>,
    /// Per-pixel Bernoulli flip probability.
    pub noise_prob: f64,
    /// Head labels snap to this grid, imitating coarse manual annotation;
    /// 0 or 1 keeps them exact.
    pub head_label_grid: u32,
    pub output: OutputMode,
}

impl SceneScript {
    /// First starting frame.
    pub fn t_ii(&self) -> u32 {
        self.n_waiting
    }

    /// First moving frame.
    pub fn t_iii(&self) -> u32 {
        self.n_waiting + self.n_starting
    }

    pub fn duration(&self) -> u32 {
        self.n_waiting + self.n_starting + self.n_moving
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.width == 0 || self.height == 0 {
            return Err(SynthError::InvalidScript("empty frame".into()));
        }
        if !(self.frame_rate_hz.is_finite() && self.frame_rate_hz > 0.0) {
            return Err(SynthError::InvalidScript("frame rate must be positive".into()));
        }
        if self.n_waiting == 0 || self.n_moving == 0 {
            return Err(SynthError::InvalidScript(
                "need at least one waiting and one moving frame".into(),
            ));
        }
        if !(self.velocity.0.is_finite() && self.velocity.1.is_finite()) {
            return Err(SynthError::InvalidScript("velocity must be finite".into()));
        }
        if self.jitter_amplitude < 0.0 || self.limb_amplitude < 0.0 {
            return Err(SynthError::InvalidScript("amplitudes must be >= 0".into()));
        }
        if self.limb_period == 0 {
            return Err(SynthError::InvalidScript("limb period must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_prob) {
            return Err(SynthError::InvalidScript(
                "noise probability must be in [0, 1]".into(),
            ));
        }
        // the figure plus jitter must stay inside the frame for the whole
        // scene; otherwise centroid bookkeeping breaks
        let jit = self.jitter_amplitude.ceil() as i64;
        let limb = self.limb_amplitude.ceil() as i64;
        let half_w = self.shape.half_width(limb as i32) as i64;
        let (end_dx, end_dy) = cumulative_offset(self.velocity, self.n_moving);
        let min_x = self.head_x as i64 - half_w - jit + end_dx.min(0);
        let max_x = self.head_x as i64 + half_w + jit + end_dx.max(0);
        let min_y = self.head_y as i64 - self.shape.extent_above() as i64 - jit + end_dy.min(0);
        let max_y = self.head_y as i64 + self.shape.extent_below() as i64 + jit + end_dy.max(0);
        if min_x < 0 || max_x >= self.width as i64 || min_y < 0 || max_y >= self.height as i64 {
            return Err(SynthError::InvalidScript(format!(
                "figure leaves the {}x{} frame (x {min_x}..{max_x}, y {min_y}..{max_y})",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Cumulative integer translation after `k` moving frames.
fn cumulative_offset(velocity: (f64, f64), k: u32) -> (i64, i64) {
    (
        (velocity.0 * k as f64).round() as i64,
        (velocity.1 * k as f64).round() as i64,
    )
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub meta: SceneMeta,
    pub frames: Vec<ClassMapFrame>,
}

impl SyntheticScene {
    pub fn annotation(&self) -> Result<crate::eval::SceneAnnotation, crate::eval::EvalError> {
        self.meta.annotation()
    }

    pub fn binary_frames(&self) -> Vec<BinaryFrame> {
        self.frames
            .iter()
            .map(|f| binarize(f, &self.meta.foreground_classes))
            .collect()
    }
}

const OWNER_NONE: u8 = 0;
const OWNER_DISTRACTOR: u8 = 1;
const OWNER_BIKE: u8 = 2;
const OWNER_RIDER: u8 = 3;

struct Painter {
    width: i64,
    height: i64,
    owner: Vec<u8>,
}

impl Painter {
    fn new(width: u32, height: u32) -> Self {
        Self {
            width: width as i64,
            height: height as i64,
            owner: vec![OWNER_NONE; (width as usize) * (height as usize)],
        }
    }

    fn clear(&mut self) {
        self.owner.fill(OWNER_NONE);
    }

    /// Paint an ellipse; a pixel belongs to it when its center (offset by
    /// +0.5 in both axes) falls inside. Integer centers therefore produce
    /// translation-identical pixel patterns.
    fn ellipse(&mut self, owner: u8, cx: f64, cy: f64, rx: f64, ry: f64) {
        let x0 = ((cx - rx).floor() as i64).max(0);
        let x1 = ((cx + rx).ceil() as i64).min(self.width - 1);
        let y0 = ((cy - ry).floor() as i64).max(0);
        let y1 = ((cy + ry).ceil() as i64).min(self.height - 1);
        for y in y0..=y1 {
            let dy = (y as f64 + 0.5 - cy) / ry;
            for x in x0..=x1 {
                let dx = (x as f64 + 0.5 - cx) / rx;
                if dx * dx + dy * dy <= 1.0 {
                    self.owner[(y * self.width + x) as usize] = owner;
                }
            }
        }
    }
}

/// Knee protrusion at frame `t`: zero before the starting boundary, then
/// an oscillation that starts mid-amplitude so the onset is visible.
fn limb_extension(script: &SceneScript, t: u32) -> i32 {
    if t < script.t_ii() || script.limb_amplitude == 0.0 {
        return 0;
    }
    let phase = TAU * ((t - script.t_ii()) % script.limb_period) as f64 / script.limb_period as f64;
    (script.limb_amplitude * (0.5 + 0.5 * phase.sin())).round() as i32
}

/// Whole-figure offset at frame `t`: jitter while waiting or starting,
/// accumulated translation once moving.
fn figure_offset(script: &SceneScript, t: u32, jitter: (i64, i64)) -> (i64, i64) {
    if t >= script.t_iii() {
        cumulative_offset(script.velocity, t - script.t_iii() + 1)
    } else {
        jitter
    }
}

fn paint_cyclist(p: &mut Painter, shape: &CyclistShape, hx: i64, hy: i64, limb: i32) {
    let (hx, hy) = (hx as f64, hy as f64);
    let torso_cy = hy + shape.torso_dy() as f64;
    let bike_cy = hy + shape.bike_dy() as f64;
    // bicycle first, rider over it
    p.ellipse(OWNER_BIKE, hx, bike_cy, shape.bike_rx as f64, shape.bike_ry as f64);
    for side in [-1.0, 1.0] {
        p.ellipse(
            OWNER_BIKE,
            hx + side * shape.wheel_dx as f64,
            bike_cy + shape.wheel_dy as f64,
            shape.wheel_r as f64,
            shape.wheel_r as f64,
        );
    }
    p.ellipse(
        OWNER_RIDER,
        hx,
        torso_cy,
        shape.torso_rx as f64,
        shape.torso_ry as f64,
    );
    p.ellipse(OWNER_RIDER, hx, hy, shape.head_r as f64, shape.head_r as f64);
    let knee_reach = (shape.knee_dx + limb) as f64;
    for side in [-1.0, 1.0] {
        p.ellipse(
            OWNER_RIDER,
            hx + side * knee_reach,
            torso_cy,
            shape.knee_r as f64,
            shape.knee_r as f64,
        );
    }
}

fn paint_distractor(p: &mut Painter, d: &DistractorScript, t: u32) {
    let cx = (d.start_x + d.vx * t as f64).round();
    let cy = (d.start_y + d.vy * t as f64).round();
    p.ellipse(OWNER_DISTRACTOR, cx, cy, d.body_rx, d.body_ry);
    p.ellipse(
        OWNER_DISTRACTOR,
        cx,
        cy - d.body_ry - d.head_r + 2.0,
        d.head_r,
        d.head_r,
    );
}

/// Centroid of the pixels owned by the cyclist (rider or bike).
fn cyclist_centroid(owner: &[u8], width: i64) -> (f64, f64) {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut n = 0.0;
    for (i, &o) in owner.iter().enumerate() {
        if o == OWNER_BIKE || o == OWNER_RIDER {
            sx += (i as i64 % width) as f64;
            sy += (i as i64 / width) as f64;
            n += 1.0;
        }
    }
    (sx / n, sy / n)
}

/// Integer jitter from the disk of radius `amplitude`, by rejection.
fn sample_jitter(rng: &mut impl Rng, amplitude: f64) -> (i64, i64) {
    let a = amplitude.floor() as i64;
    if a == 0 {
        return (0, 0);
    }
    loop {
        let dx = rng.gen_range(-a..=a);
        let dy = rng.gen_range(-a..=a);
        if ((dx * dx + dy * dy) as f64).sqrt() <= amplitude {
            return (dx, dy);
        }
    }
}

fn quantize_coord(v: i64, grid: u32) -> i32 {
    if grid <= 1 {
        return v as i32;
    }
    let g = grid as i64;
    ((v + g / 2).div_euclid(g) * g) as i32
}

/// Flip roughly `prob * len` mask pixels by geometric gap skipping, which
/// is distributed identically to an independent Bernoulli per pixel.
fn apply_noise(classes: &mut [u8], prob: f64, fg_value: u8, rng: &mut impl Rng) {
    if prob <= 0.0 {
        return;
    }
    if prob >= 1.0 {
        for c in classes.iter_mut() {
            *c = if *c == 0 { fg_value } else { 0 };
        }
        return;
    }
    let log_q = (1.0 - prob).ln();
    let mut i = 0usize;
    loop {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let gap = (u.ln() / log_q).floor();
        if gap >= (classes.len() - i) as f64 {
            break;
        }
        i += gap as usize;
        classes[i] = if classes[i] == 0 { fg_value } else { 0 };
        i += 1;
        if i >= classes.len() {
            break;
        }
    }
}

pub fn render_scene(script: &SceneScript) -> Result<SyntheticScene, SynthError> {
    script.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let mut painter = Painter::new(script.width, script.height);
    let (person_value, bike_value, foreground_classes) = match script.output {
        OutputMode::Binary => (1u8, 1u8, vec![1u8]),
        OutputMode::ClassMap => (CLASS_PERSON, CLASS_BICYCLE, vec![CLASS_PERSON, CLASS_BICYCLE]),
    };

    // jitter-free reference centroid for the pre-translation invariant
    paint_cyclist(
        &mut painter,
        &script.shape,
        script.head_x as i64,
        script.head_y as i64,
        0,
    );
    let reference = cyclist_centroid(&painter.owner, painter.width);

    let duration = script.duration();
    let mut frames = Vec::with_capacity(duration as usize);
    let mut head_positions = Vec::with_capacity(duration as usize);
    let mut phase_labels = Vec::with_capacity(duration as usize);
    for t in 0..duration {
        let jitter = if t < script.t_iii() {
            sample_jitter(&mut rng, script.jitter_amplitude)
        } else {
            (0, 0)
        };
        let offset = figure_offset(script, t, jitter);
        let limb = limb_extension(script, t);
        let hx = script.head_x as i64 + offset.0;
        let hy = script.head_y as i64 + offset.1;

        painter.clear();
        if let Some(d) = &script.distractor {
            if d.depth == DepthOrder::Behind {
                paint_distractor(&mut painter, d, t);
            }
        }
        paint_cyclist(&mut painter, &script.shape, hx, hy, limb);

        // the starting phase must not translate the blob: the knee pair is
        // antagonistic, so only jitter may move the centroid
        if t < script.t_iii() {
            let c = cyclist_centroid(&painter.owner, painter.width);
            let dx = c.0 - reference.0;
            let dy = c.1 - reference.1;
            let shift = (dx * dx + dy * dy).sqrt();
            assert!(
                shift <= script.jitter_amplitude + 1e-6,
                "frame {t}: centroid moved {shift:.3} px before the moving phase"
            );
        }

        if let Some(d) = &script.distractor {
            if d.depth == DepthOrder::InFront {
                paint_distractor(&mut painter, d, t);
            }
        }

        let mut classes: Vec<u8> = painter
            .owner
            .iter()
            .map(|&o| match o {
                OWNER_DISTRACTOR | OWNER_RIDER => person_value,
                OWNER_BIKE => bike_value,
                _ => 0,
            })
            .collect();
        apply_noise(&mut classes, script.noise_prob, person_value, &mut rng);

        let timestamp = t as f64 / script.frame_rate_hz;
        frames.push(
            ClassMapFrame::new(script.width, script.height, classes, timestamp)
                .expect("buffer sized to the frame"),
        );
        head_positions.push((
            quantize_coord(hx, script.head_label_grid),
            quantize_coord(hy, script.head_label_grid),
        ));
        phase_labels.push(if t < script.t_ii() {
            Phase::Waiting
        } else if t < script.t_iii() {
            Phase::Starting
        } else {
            Phase::Moving
        });
    }

    Ok(SyntheticScene {
        meta: SceneMeta {
            frame_rate_hz: script.frame_rate_hz,
            foreground_classes,
            head_positions,
            phase_labels,
        },
        frames,
    })
}

/// Write the scene in the directory layout the loader ingests: one
/// grayscale PNG per frame plus the JSON metadata file.
pub fn write_scene_dir(
    scene: &SyntheticScene,
    dir: &std::path::Path,
) -> Result<(), crate::silhouette::SilhouetteError> {
    use crate::silhouette::{frame_file_name, save_gray_png, save_scene_meta};
    std::fs::create_dir_all(dir).map_err(|e| crate::silhouette::SilhouetteError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    for (i, frame) in scene.frames.iter().enumerate() {
        save_gray_png(
            &dir.join(frame_file_name(i)),
            frame.width(),
            frame.height(),
            frame.classes(),
        )?;
    }
    save_scene_meta(dir, &scene.meta)
}

// --- dataset assembly ---

/// Ranges are inclusive. Scenes are sampled independently; per-scene seeds
/// derive from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptDistribution {
    pub width: u32,
    pub height: u32,
    pub frame_rate_hz: f64,
    pub waiting_frames: (u32, u32),
    pub starting_frames: (u32, u32),
    pub moving_frames: (u32, u32),
    pub jitter_amplitude: f64,
    pub limb_amplitude: (f64, f64),
    pub limb_period: (u32, u32),
    /// Translation speed magnitude in pixels/frame; direction alternates.
    pub speed: (f64, f64),
    pub distractor_prob: f64,
    pub noise_prob: f64,
    pub head_label_grid: u32,
    pub output: OutputMode,
}

impl Default for ScriptDistribution {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            frame_rate_hz: 50.0,
            waiting_frames: (50, 90),
            starting_frames: (12, 25),
            moving_frames: (40, 60),
            jitter_amplitude: 1.0,
            limb_amplitude: (5.0, 8.0),
            limb_period: (8, 14),
            speed: (1.0, 1.8),
            distractor_prob: 0.25,
            noise_prob: 0.002,
            head_label_grid: 4,
            output: OutputMode::Binary,
        }
    }
}

fn grid_range(rng: &mut impl Rng, lo: i32, hi: i32, grid: i32) -> i32 {
    rng.gen_range(lo / grid..=hi / grid) * grid
}

/// Draw one scene script. The start position and velocity are chosen so
/// the figure stays inside the frame for the whole scene.
pub fn sample_script(dist: &ScriptDistribution, rng: &mut impl Rng) -> SceneScript {
    let grid = dist.head_label_grid.max(1) as i32;
    let rightward = rng.gen_bool(0.5);
    let speed = rng.gen_range(dist.speed.0..=dist.speed.1);
    let n_waiting = rng.gen_range(dist.waiting_frames.0..=dist.waiting_frames.1);
    let n_starting = rng.gen_range(dist.starting_frames.0..=dist.starting_frames.1);
    let n_moving = rng.gen_range(dist.moving_frames.0..=dist.moving_frames.1);
    let limb_amplitude = rng.gen_range(dist.limb_amplitude.0..=dist.limb_amplitude.1);
    let shape = CyclistShape::default();

    // keep the figure inside the frame with margin for jitter and labels
    let margin = shape.half_width(limb_amplitude.ceil() as i32)
        + dist.jitter_amplitude.ceil() as i32
        + grid
        + 2;
    let travel = (speed * n_moving as f64).ceil() as i32;
    let head_x = if rightward {
        grid_range(rng, margin, (dist.width as i32 - 1) - margin - travel, grid)
    } else {
        grid_range(rng, margin + travel, (dist.width as i32 - 1) - margin, grid)
    };
    let head_y = grid_range(
        rng,
        shape.extent_above() + dist.jitter_amplitude.ceil() as i32 + grid + 2,
        (dist.height as i32 - 1)
            - shape.extent_below()
            - dist.jitter_amplitude.ceil() as i32
            - grid
            - 4,
        grid,
    );
    let vx = if rightward { speed } else { -speed };

    let distractor = if rng.gen_bool(dist.distractor_prob) {
        let depth = if rng.gen_bool(0.5) {
            DepthOrder::Behind
        } else {
            DepthOrder::InFront
        };
        let from_right = rng.gen_bool(0.5);
        let offset = rng.gen_range(60.0..100.0);
        let walk = rng.gen_range(0.8..1.6);
        Some(DistractorScript {
            depth,
            start_x: head_x as f64 + if from_right { offset } else { -offset },
            start_y: head_y as f64 + rng.gen_range(10.0..30.0),
            vx: if from_right { -walk } else { walk },
            vy: 0.0,
            body_rx: 7.0,
            body_ry: 18.0,
            head_r: 5.0,
        })
    } else {
        None
    };

    SceneScript {
        seed: rng.gen(),
        width: dist.width,
        height: dist.height,
        frame_rate_hz: dist.frame_rate_hz,
        n_waiting,
        n_starting,
        n_moving,
        head_x,
        head_y,
        shape,
        jitter_amplitude: dist.jitter_amplitude,
        limb_amplitude,
        limb_period: rng.gen_range(dist.limb_period.0..=dist.limb_period.1),
        velocity: (vx, 0.0),
        distractor,
        noise_prob: dist.noise_prob,
        head_label_grid: dist.head_label_grid,
        output: dist.output,
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSplits {
    pub train: Vec<SceneScript>,
    pub val: Vec<SceneScript>,
    pub test: Vec<SceneScript>,
}

/// Floor each quota, then hand out the remainder by descending fractional
/// part with ties broken in train/val/test order.
pub fn split_counts(
    n: usize,
    ratios: (f64, f64, f64),
) -> Result<(usize, usize, usize), SynthError> {
    let parts = [ratios.0, ratios.1, ratios.2];
    if parts.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(SynthError::BadRatios("ratios must be in [0, 1]".into()));
    }
    let total: f64 = parts.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(SynthError::BadRatios(format!("ratios sum to {total}, not 1")));
    }
    let quotas: Vec<f64> = parts.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for k in 0..(n - assigned) {
        counts[order[k % 3]] += 1;
    }
    Ok((counts[0], counts[1], counts[2]))
}

pub fn make_dataset(
    dist: &ScriptDistribution,
    n_scenes: usize,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplits, SynthError> {
    let (n_train, n_val, n_test) = split_counts(n_scenes, ratios)?;
    if n_val == 0 || n_test == 0 {
        log::warn!(
            "split of {n_scenes} scenes leaves an empty validation or test set \
             ({n_train}/{n_val}/{n_test})"
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scripts: Vec<SceneScript> = (0..n_scenes).map(|_| sample_script(dist, &mut rng)).collect();
    let mut indices: Vec<usize> = (0..n_scenes).collect();
    indices.shuffle(&mut rng);
    let pick = |range: std::ops::Range<usize>| -> Vec<SceneScript> {
        indices[range].iter().map(|&i| scripts[i].clone()).collect()
    };
    Ok(DatasetSplits {
        train: pick(0..n_train),
        val: pick(n_train..n_train + n_val),
        test: pick(n_train + n_val..n_scenes),
    })
}
