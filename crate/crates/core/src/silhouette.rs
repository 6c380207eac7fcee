//! Silhouette ingestion: per-pixel class maps, binary foreground masks,
//! head-anchored region-of-interest crops and short frame stacks.
//!
//! Scenes live on disk as one 8-bit grayscale PNG per frame (pixel value =
//! class id) next to a `scene.json` with the frame rate, per-frame head
//! positions and phase labels, and the class ids that count as foreground.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EvalError, Phase, SceneAnnotation};

#[derive(Debug, Error)]
pub enum SilhouetteError {
    #[error("head position ({x}, {y}) lies outside the {width}x{height} frame")]
    HeadOutsideFrame {
        x: i32,
        y: i32,
        width: u32,
        height: u32,
    },
    #[error("need {needed} frames of history but only {available} are available")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("stack depth must be at least 1")]
    EmptyStack,
    #[error("frame size mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        expected_w: u32,
        expected_h: u32,
        got_w: u32,
        got_h: u32,
    },
    #[error("pixel buffer of length {len} does not match {width}x{height}")]
    BadBufferLength { len: usize, width: u32, height: u32 },
    #[error("mask value {value} is not 0 or 1")]
    InvalidMask { value: u8 },
    #[error("invalid ROI spec: {0}")]
    InvalidRoi(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    BadImage {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {reason}")]
    BadMetadata { path: PathBuf, reason: String },
    #[error(transparent)]
    Annotation(#[from] EvalError),
}

/// One segmented frame: a small-integer class id per pixel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMapFrame {
    width: u32,
    height: u32,
    classes: Vec<u8>,
    /// Seconds since the start of the scene.
    pub timestamp: f64,
}

impl ClassMapFrame {
    pub fn new(
        width: u32,
        height: u32,
        classes: Vec<u8>,
        timestamp: f64,
    ) -> Result<Self, SilhouetteError> {
        if classes.len() != (width as usize) * (height as usize) {
            return Err(SilhouetteError::BadBufferLength {
                len: classes.len(),
                width,
                height,
            });
        }
        Ok(Self {
            width,
            height,
            classes,
            timestamp,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    pub fn class_at(&self, x: u32, y: u32) -> u8 {
        self.classes[(y as usize) * (self.width as usize) + x as usize]
    }
}

/// One binary foreground mask, row-major, strictly 0/1 valued.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryFrame {
    width: u32,
    height: u32,
    mask: Vec<u8>,
}

impl BinaryFrame {
    pub fn new(width: u32, height: u32, mask: Vec<u8>) -> Result<Self, SilhouetteError> {
        if mask.len() != (width as usize) * (height as usize) {
            return Err(SilhouetteError::BadBufferLength {
                len: mask.len(),
                width,
                height,
            });
        }
        if let Some(&value) = mask.iter().find(|&&v| v > 1) {
            return Err(SilhouetteError::InvalidMask { value });
        }
        Ok(Self {
            width,
            height,
            mask,
        })
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            mask: vec![0; (width as usize) * (height as usize)],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.mask[(y as usize) * (self.width as usize) + x as usize]
    }

    pub fn foreground_count(&self) -> usize {
        self.mask.iter().map(|&v| v as usize).sum()
    }
}

/// Geometry of the head-anchored crop window.
///
/// The window's top-left corner is placed at
/// `(head_x - round(anchor_x * width), head_y - round(anchor_y * height))`,
/// so with the defaults the head sits at the horizontal center, 20% from
/// the top.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoiSpec {
    pub width: u32,
    pub height: u32,
    pub anchor_x: f64,
    pub anchor_y: f64,
}

impl Default for RoiSpec {
    fn default() -> Self {
        Self {
            width: 192,
            height: 160,
            anchor_x: 0.5,
            anchor_y: 0.2,
        }
    }
}

impl RoiSpec {
    pub fn validate(&self) -> Result<(), SilhouetteError> {
        if self.width == 0 || self.height == 0 {
            return Err(SilhouetteError::InvalidRoi(
                "ROI dimensions must be positive".into(),
            ));
        }
        for (name, a) in [("anchor_x", self.anchor_x), ("anchor_y", self.anchor_y)] {
            if !(a.is_finite() && (0.0..=1.0).contains(&a)) {
                return Err(SilhouetteError::InvalidRoi(format!(
                    "{name} must be inside [0, 1], got {a}"
                )));
            }
        }
        Ok(())
    }

    /// Top-left corner of the window for a given head position.
    pub fn origin(&self, head_x: i32, head_y: i32) -> (i64, i64) {
        let off_x = (self.anchor_x * self.width as f64).round() as i64;
        let off_y = (self.anchor_y * self.height as f64).round() as i64;
        (head_x as i64 - off_x, head_y as i64 - off_y)
    }
}

/// Keep exactly the pixels whose class id is in `foreground`.
pub fn binarize(frame: &ClassMapFrame, foreground: &[u8]) -> BinaryFrame {
    let mut lut = [0u8; 256];
    for &class in foreground {
        lut[class as usize] = 1;
    }
    BinaryFrame {
        width: frame.width,
        height: frame.height,
        mask: frame.classes.iter().map(|&c| lut[c as usize]).collect(),
    }
}

/// Cut the head-anchored window out of `frame`, zero-padding the parts of
/// the window that fall outside the frame. The head itself must be inside
/// the frame.
pub fn crop_roi(
    frame: &BinaryFrame,
    head_x: i32,
    head_y: i32,
    spec: &RoiSpec,
) -> Result<BinaryFrame, SilhouetteError> {
    spec.validate()?;
    if head_x < 0 || head_y < 0 || head_x as u32 >= frame.width || head_y as u32 >= frame.height {
        return Err(SilhouetteError::HeadOutsideFrame {
            x: head_x,
            y: head_y,
            width: frame.width,
            height: frame.height,
        });
    }
    let (x0, y0) = spec.origin(head_x, head_y);
    let mut mask = vec![0u8; (spec.width as usize) * (spec.height as usize)];
    for v in 0..spec.height as i64 {
        let sy = y0 + v;
        if sy < 0 || sy >= frame.height as i64 {
            continue;
        }
        let row = (sy as usize) * (frame.width as usize);
        let out_row = (v as usize) * (spec.width as usize);
        for u in 0..spec.width as i64 {
            let sx = x0 + u;
            if sx < 0 || sx >= frame.width as i64 {
                continue;
            }
            mask[out_row + u as usize] = frame.mask[row + sx as usize];
        }
    }
    Ok(BinaryFrame {
        width: spec.width,
        height: spec.height,
        mask,
    })
}

/// The `n` most recent frames of a scene, index 0 being the newest.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteStack {
    frames: Vec<BinaryFrame>,
}

impl SilhouetteStack {
    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    pub fn width(&self) -> u32 {
        self.frames[0].width
    }

    pub fn height(&self) -> u32 {
        self.frames[0].height
    }

    /// Frame `t` steps in the past; `t = 0` is the most recent frame.
    pub fn frame(&self, t: usize) -> &BinaryFrame {
        &self.frames[t]
    }
}

/// Build a stack from a chronologically ordered slice (oldest first,
/// newest last), keeping the `n` most recent frames.
pub fn stack(frames: &[BinaryFrame], n: usize) -> Result<SilhouetteStack, SilhouetteError> {
    if n == 0 {
        return Err(SilhouetteError::EmptyStack);
    }
    if frames.len() < n {
        return Err(SilhouetteError::InsufficientHistory {
            needed: n,
            available: frames.len(),
        });
    }
    let newest = &frames[frames.len() - 1];
    for f in &frames[frames.len() - n..] {
        if f.width != newest.width || f.height != newest.height {
            return Err(SilhouetteError::DimensionMismatch {
                expected_w: newest.width,
                expected_h: newest.height,
                got_w: f.width,
                got_h: f.height,
            });
        }
    }
    Ok(SilhouetteStack {
        frames: frames[frames.len() - n..].iter().rev().cloned().collect(),
    })
}

/// Scene sidecar metadata stored as `scene.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneMeta {
    pub frame_rate_hz: f64,
    /// Class ids that count as foreground when binarizing the frames.
    pub foreground_classes: Vec<u8>,
    /// Per-frame head position in pixels.
    pub head_positions: Vec<(i32, i32)>,
    /// Per-frame motion phase.
    pub phase_labels: Vec<Phase>,
}

impl SceneMeta {
    pub fn annotation(&self) -> Result<SceneAnnotation, EvalError> {
        SceneAnnotation::from_phases(self.phase_labels.clone(), self.frame_rate_hz)
    }

    pub fn len(&self) -> usize {
        self.phase_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phase_labels.is_empty()
    }
}

pub const SCENE_META_FILE: &str = "scene.json";

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

pub fn save_gray_png(
    path: &Path,
    width: u32,
    height: u32,
    pixels: &[u8],
) -> Result<(), SilhouetteError> {
    if pixels.len() != (width as usize) * (height as usize) {
        return Err(SilhouetteError::BadBufferLength {
            len: pixels.len(),
            width,
            height,
        });
    }
    let img = image::GrayImage::from_raw(width, height, pixels.to_vec())
        .expect("buffer length checked above");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| SilhouetteError::BadImage {
            path: path.to_path_buf(),
            source,
        })
}

pub fn load_class_map(path: &Path, timestamp: f64) -> Result<ClassMapFrame, SilhouetteError> {
    let bytes = fs::read(path).map_err(|source| SilhouetteError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let img = image::load_from_memory(&bytes)
        .map_err(|source| SilhouetteError::BadImage {
            path: path.to_path_buf(),
            source,
        })?
        .into_luma8();
    ClassMapFrame::new(img.width(), img.height(), img.into_raw(), timestamp)
}

pub fn save_scene_meta(dir: &Path, meta: &SceneMeta) -> Result<(), SilhouetteError> {
    let path = dir.join(SCENE_META_FILE);
    let json = serde_json::to_vec_pretty(meta).map_err(|e| SilhouetteError::BadMetadata {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    fs::write(&path, json).map_err(|source| SilhouetteError::Io { path, source })
}

pub fn load_scene_meta(dir: &Path) -> Result<SceneMeta, SilhouetteError> {
    let path = dir.join(SCENE_META_FILE);
    let bytes = fs::read(&path).map_err(|source| SilhouetteError::Io {
        path: path.clone(),
        source,
    })?;
    let meta: SceneMeta =
        serde_json::from_slice(&bytes).map_err(|e| SilhouetteError::BadMetadata {
            path: path.clone(),
            reason: e.to_string(),
        })?;
    if meta.head_positions.len() != meta.phase_labels.len() {
        return Err(SilhouetteError::BadMetadata {
            path,
            reason: format!(
                "{} head positions but {} phase labels",
                meta.head_positions.len(),
                meta.phase_labels.len()
            ),
        });
    }
    Ok(meta)
}

/// A scene read back from disk, frames already binarized.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub meta: SceneMeta,
    pub frames: Vec<BinaryFrame>,
}

impl LoadedScene {
    pub fn annotation(&self) -> Result<SceneAnnotation, EvalError> {
        self.meta.annotation()
    }
}

pub fn load_scene_dir(dir: &Path) -> Result<LoadedScene, SilhouetteError> {
    let meta = load_scene_meta(dir)?;
    let mut frames = Vec::with_capacity(meta.len());
    for index in 0..meta.len() {
        let path = dir.join(frame_file_name(index));
        let class_map = load_class_map(&path, index as f64 / meta.frame_rate_hz)?;
        frames.push(binarize(&class_map, &meta.foreground_classes));
    }
    Ok(LoadedScene { meta, frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn class_map(width: u32, height: u32, classes: &[u8]) -> ClassMapFrame {
        ClassMapFrame::new(width, height, classes.to_vec(), 0.0).unwrap()
    }

    #[test]
    fn binarize_all_background_is_all_zero() {
        let frame = class_map(4, 3, &[0; 12]);
        let mask = binarize(&frame, &[15, 2]);
        assert!(mask.mask().iter().all(|&v| v == 0));
        assert_eq!((mask.width(), mask.height()), (4, 3));
    }

    #[test]
    fn binarize_keeps_exactly_the_foreground_classes() {
        #[rustfmt::skip]
        let classes = [
            0, 15,  2,  7,
            9,  0, 15, 15,
            2,  2,  0,  1,
        ];
        let frame = class_map(4, 3, &classes);
        let mask = binarize(&frame, &[15, 2]);
        // per-pixel set-membership oracle
        for (i, &c) in classes.iter().enumerate() {
            let want = u8::from(c == 15 || c == 2);
            assert_eq!(mask.mask()[i], want, "pixel {i}");
        }
    }

    #[test]
    fn binarize_single_matching_pixel() {
        let mut classes = vec![0u8; 25];
        classes[12] = 7;
        let frame = class_map(5, 5, &classes);
        let mask = binarize(&frame, &[7]);
        assert_eq!(mask.foreground_count(), 1);
        assert_eq!(mask.get(2, 2), 1);
    }

    proptest! {
        #[test]
        fn binarize_matches_membership_and_is_idempotent(
            classes in proptest::collection::vec(0u8..20, 30),
            fg in proptest::collection::vec(0u8..20, 0..5),
        ) {
            let frame = class_map(6, 5, &classes);
            let mask = binarize(&frame, &fg);
            for (i, &c) in classes.iter().enumerate() {
                prop_assert_eq!(mask.mask()[i], u8::from(fg.contains(&c)));
            }
            // re-binarizing the mask with foreground {1} reproduces it
            let as_classes = ClassMapFrame::new(6, 5, mask.mask().to_vec(), 0.0).unwrap();
            prop_assert_eq!(&binarize(&as_classes, &[1]), &mask);
        }
    }

    #[test]
    fn roi_origin_matches_the_anchor_arithmetic() {
        let spec = RoiSpec::default();
        assert_eq!(spec.origin(100, 40), (4, 8)); // 100 - 96, 40 - 32
    }

    #[test]
    fn crop_interior_copies_pixels() {
        let mut mask = vec![0u8; 300 * 200];
        for y in 0..200 {
            for x in 0..300 {
                mask[y * 300 + x] = u8::from((x + y) % 3 == 0);
            }
        }
        let frame = BinaryFrame::new(300, 200, mask).unwrap();
        let spec = RoiSpec {
            width: 32,
            height: 16,
            anchor_x: 0.5,
            anchor_y: 0.25,
        };
        let crop = crop_roi(&frame, 150, 100, &spec).unwrap();
        let (x0, y0) = spec.origin(150, 100);
        for v in 0..16u32 {
            for u in 0..32u32 {
                let sx = (x0 + u as i64) as u32;
                let sy = (y0 + v as i64) as u32;
                assert_eq!(crop.get(u, v), frame.get(sx, sy), "({u}, {v})");
            }
        }
    }

    #[test]
    fn crop_pads_outside_pixels_with_zero() {
        // all-ones frame, head near the top-left corner
        let frame = BinaryFrame::new(100, 100, vec![1; 10_000]).unwrap();
        let spec = RoiSpec {
            width: 40,
            height: 40,
            anchor_x: 0.5,
            anchor_y: 0.5,
        };
        let crop = crop_roi(&frame, 5, 5, &spec).unwrap();
        let (x0, y0) = spec.origin(5, 5);
        assert_eq!((x0, y0), (-15, -15));
        for v in 0..40u32 {
            for u in 0..40u32 {
                let inside = (x0 + u as i64) >= 0 && (y0 + v as i64) >= 0;
                assert_eq!(crop.get(u, v), u8::from(inside), "({u}, {v})");
            }
        }
        // foreground count equals the overlap area
        assert_eq!(crop.foreground_count(), 25 * 25);
    }

    #[test]
    fn crop_rejects_heads_outside_the_frame() {
        let frame = BinaryFrame::zeros(50, 50);
        let spec = RoiSpec::default();
        for (x, y) in [(-1, 10), (10, -1), (50, 10), (10, 50)] {
            assert!(matches!(
                crop_roi(&frame, x, y, &spec),
                Err(SilhouetteError::HeadOutsideFrame { .. })
            ));
        }
        assert!(crop_roi(&frame, 0, 0, &spec).is_ok());
        assert!(crop_roi(&frame, 49, 49, &spec).is_ok());
    }

    proptest! {
        #[test]
        fn crop_of_all_zero_frame_is_all_zero(
            head_x in 0i32..64,
            head_y in 0i32..48,
        ) {
            let frame = BinaryFrame::zeros(64, 48);
            let spec = RoiSpec { width: 24, height: 20, anchor_x: 0.3, anchor_y: 0.7 };
            let crop = crop_roi(&frame, head_x, head_y, &spec).unwrap();
            prop_assert!(crop.mask().iter().all(|&v| v == 0));
        }

        #[test]
        fn crop_preserves_interior_foreground(
            seed_bits in proptest::collection::vec(proptest::bool::ANY, 64 * 48),
            head_x in 20i32..44,
            head_y in 10i32..38,
        ) {
            let mask: Vec<u8> = seed_bits.iter().map(|&b| u8::from(b)).collect();
            let frame = BinaryFrame::new(64, 48, mask).unwrap();
            let spec = RoiSpec { width: 16, height: 12, anchor_x: 0.5, anchor_y: 0.5 };
            let crop = crop_roi(&frame, head_x, head_y, &spec).unwrap();
            // double-loop counting oracle over the source window
            let (x0, y0) = spec.origin(head_x, head_y);
            let mut want = 0usize;
            for sy in y0..y0 + 12 {
                for sx in x0..x0 + 16 {
                    if sx >= 0 && sy >= 0 && sx < 64 && sy < 48 {
                        want += frame.get(sx as u32, sy as u32) as usize;
                    }
                }
            }
            prop_assert_eq!(crop.foreground_count(), want);
        }
    }

    #[test]
    fn stack_keeps_the_most_recent_frames_newest_first() {
        // 12 frames, each filled with its own index
        let frames: Vec<BinaryFrame> = (0..12)
            .map(|i| {
                let mut f = BinaryFrame::zeros(3, 2);
                f.mask[0] = u8::from(i % 2 == 0);
                f.mask[1] = 1;
                f.mask[2] = u8::from(i >= 6);
                f
            })
            .collect();
        let s = stack(&frames, 10).unwrap();
        assert_eq!(s.depth(), 10);
        // index 0 is the newest = input frame 11
        assert_eq!(s.frame(0), &frames[11]);
        assert_eq!(s.frame(9), &frames[2]);
    }

    #[test]
    fn stack_errors() {
        let frames: Vec<BinaryFrame> = (0..3).map(|_| BinaryFrame::zeros(3, 2)).collect();
        assert!(matches!(
            stack(&frames, 4),
            Err(SilhouetteError::InsufficientHistory {
                needed: 4,
                available: 3
            })
        ));
        assert!(matches!(stack(&frames, 0), Err(SilhouetteError::EmptyStack)));
        let mut mixed = frames.clone();
        mixed.push(BinaryFrame::zeros(4, 2));
        assert!(matches!(
            stack(&mixed, 2),
            Err(SilhouetteError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn stack_slides_by_one_frame() {
        let frames: Vec<BinaryFrame> = (0..8)
            .map(|i| {
                let mut f = BinaryFrame::zeros(2, 2);
                f.mask[i % 4] = 1;
                f
            })
            .collect();
        let a = stack(&frames[..7], 5).unwrap();
        let b = stack(&frames[..8], 5).unwrap();
        // b's frame t+1 is a's frame t for all but the newest
        for t in 0..4 {
            assert_eq!(b.frame(t + 1), a.frame(t));
        }
        assert_eq!(b.frame(0), &frames[7]);
    }

    #[test]
    fn binary_frame_rejects_non_binary_values() {
        assert!(matches!(
            BinaryFrame::new(2, 1, vec![0, 2]),
            Err(SilhouetteError::InvalidMask { value: 2 })
        ));
        assert!(matches!(
            BinaryFrame::new(2, 2, vec![0, 1]),
            Err(SilhouetteError::BadBufferLength { .. })
        ));
    }

    #[test]
    fn scene_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let meta = SceneMeta {
            frame_rate_hz: 50.0,
            foreground_classes: vec![15, 2],
            head_positions: vec![(9, 4), (9, 5), (10, 5)],
            phase_labels: vec![Phase::Waiting, Phase::Starting, Phase::Moving],
        };
        let mut frames = Vec::new();
        for i in 0..3usize {
            let mut classes = vec![0u8; 20 * 12];
            classes[i * 21] = 15;
            classes[i * 21 + 1] = 2;
            classes[i * 21 + 2] = 9; // background class
            save_gray_png(&dir.path().join(frame_file_name(i)), 20, 12, &classes).unwrap();
            frames.push(classes);
        }
        save_scene_meta(dir.path(), &meta).unwrap();

        let scene = load_scene_dir(dir.path()).unwrap();
        assert_eq!(scene.meta.head_positions, meta.head_positions);
        assert_eq!(scene.meta.phase_labels, meta.phase_labels);
        assert_eq!(scene.frames.len(), 3);
        for (i, frame) in scene.frames.iter().enumerate() {
            let class_map = ClassMapFrame::new(20, 12, frames[i].clone(), 0.0).unwrap();
            assert_eq!(frame, &binarize(&class_map, &[15, 2]));
            assert_eq!(frame.foreground_count(), 2);
        }
        let ann = scene.annotation().unwrap();
        assert_eq!(ann.first_moving(), 2);
    }

    #[test]
    fn loading_a_missing_or_mismatched_scene_fails() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_scene_dir(dir.path()),
            Err(SilhouetteError::Io { .. })
        ));

        let meta = SceneMeta {
            frame_rate_hz: 50.0,
            foreground_classes: vec![1],
            head_positions: vec![(1, 1)],
            phase_labels: vec![Phase::Waiting, Phase::Moving],
        };
        save_scene_meta(dir.path(), &meta).unwrap();
        assert!(matches!(
            load_scene_dir(dir.path()),
            Err(SilhouetteError::BadMetadata { .. })
        ));
    }
}
