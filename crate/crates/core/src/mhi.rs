//! Motion history images with linear decay.
//!
//! Given a stack of `n` binary silhouettes (index 0 most recent), each pixel
//! takes the decay weight of the most recent frame in which it was
//! foreground, `(n - t) / n`, or 0 if it never was. Values therefore lie in
//! `{0, 1/n, 2/n, ..., 1}` and a pixel that is foreground right now is
//! exactly 1.
//!
//! On disk an MHI is `MHI1` + width/height/depth as little-endian `u32`
//! followed by row-major little-endian `f32` values. An 8-bit PNG export
//! (`round(255 * value)`, lossless for depths up to 255) exists for visual
//! inspection.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::silhouette::SilhouetteStack;

pub const MHI_MAGIC: &[u8; 4] = b"MHI1";

#[derive(Debug, Error)]
pub enum MhiError {
    #[error("frame index {t} is out of range for a depth-{n} history")]
    IndexOutOfRange { n: usize, t: usize },
    #[error("target size {width}x{height} must be positive")]
    BadTargetSize { width: u32, height: u32 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    BadFile { path: PathBuf, reason: String },
}

/// Weight of the frame `t` steps in the past within a depth-`n` history:
/// `(n - t) / n`. The most recent frame (`t = 0`) weighs exactly 1, the
/// oldest (`t = n - 1`) weighs `1/n`.
pub fn decay(n: usize, t: usize) -> Result<f64, MhiError> {
    if n == 0 || t >= n {
        return Err(MhiError::IndexOutOfRange { n, t });
    }
    Ok((n - t) as f64 / n as f64)
}

/// All decay weights of a depth-`n` history, indexed by frame age.
#[derive(Debug, Clone, PartialEq)]
pub struct DecaySchedule {
    n: usize,
    values: Vec<f64>,
}

impl DecaySchedule {
    pub fn new(n: usize) -> Result<Self, MhiError> {
        let mut values = Vec::with_capacity(n);
        for t in 0..n {
            values.push(decay(n, t)?);
        }
        if values.is_empty() {
            return Err(MhiError::IndexOutOfRange { n, t: 0 });
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionHistoryImage {
    width: u32,
    height: u32,
    /// History depth the image was built from.
    depth: u32,
    values: Vec<f32>,
}

impl MotionHistoryImage {
    pub fn new(width: u32, height: u32, depth: u32, values: Vec<f32>) -> Self {
        assert_eq!(
            values.len(),
            (width as usize) * (height as usize),
            "value buffer must match the image size"
        );
        Self {
            width,
            height,
            depth,
            values,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[(y as usize) * (self.width as usize) + x as usize]
    }
}

/// Build the MHI of a silhouette stack.
///
/// Equivalent to looping from the oldest frame to the newest and writing
/// each frame's decay weight over its foreground pixels; implemented as the
/// closed form "weight of the most recent foreground occurrence".
pub fn generate_mhi(stack: &SilhouetteStack) -> MotionHistoryImage {
    let n = stack.depth();
    let weights: Vec<f32> = (0..n)
        .map(|t| decay(n, t).expect("t < n by construction") as f32)
        .collect();
    let width = stack.width();
    let height = stack.height();
    let len = (width as usize) * (height as usize);
    let mut values = vec![0.0f32; len];
    for (i, value) in values.iter_mut().enumerate() {
        for (t, &weight) in weights.iter().enumerate() {
            if stack.frame(t).mask()[i] == 1 {
                *value = weight;
                break;
            }
        }
    }
    MotionHistoryImage {
        width,
        height,
        depth: n as u32,
        values,
    }
}

/// Bilinear resampling with pixel centers at half-integer coordinates and
/// edge clamping. Output values stay inside the input's value range.
pub fn resize_bilinear(
    image: &MotionHistoryImage,
    width: u32,
    height: u32,
) -> Result<MotionHistoryImage, MhiError> {
    if width == 0 || height == 0 {
        return Err(MhiError::BadTargetSize { width, height });
    }
    let in_w = image.width as usize;
    let in_h = image.height as usize;
    let scale_x = image.width as f64 / width as f64;
    let scale_y = image.height as f64 / height as f64;
    let mut values = vec![0.0f32; (width as usize) * (height as usize)];
    for oy in 0..height as usize {
        let fy = ((oy as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let wy = fy - y0 as f64;
        for ox in 0..width as usize {
            let fx = ((ox as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (in_w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let wx = fx - x0 as f64;
            let v00 = image.values[y0 * in_w + x0] as f64;
            let v01 = image.values[y0 * in_w + x1] as f64;
            let v10 = image.values[y1 * in_w + x0] as f64;
            let v11 = image.values[y1 * in_w + x1] as f64;
            let top = v00 + (v01 - v00) * wx;
            let bottom = v10 + (v11 - v10) * wx;
            values[oy * width as usize + ox] = (top + (bottom - top) * wy) as f32;
        }
    }
    Ok(MotionHistoryImage {
        width,
        height,
        depth: image.depth,
        values,
    })
}

/// 8-bit single-channel rendering of an image in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster8 {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Raster8 {
    /// Quantize with `round(255 * value)`; exact for MHIs of depth <= 255.
    pub fn from_mhi(image: &MotionHistoryImage) -> Self {
        Self {
            width: image.width,
            height: image.height,
            pixels: image
                .values
                .iter()
                .map(|&v| (255.0 * v as f64).round() as u8)
                .collect(),
        }
    }

    /// Map back to `[0, 1]` reals.
    pub fn to_unit_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64 / 255.0).collect()
    }
}

pub fn write_mhi(path: &Path, image: &MotionHistoryImage) -> Result<(), MhiError> {
    let mut bytes =
        Vec::with_capacity(16 + image.values.len() * 4);
    bytes.extend_from_slice(MHI_MAGIC);
    bytes.extend_from_slice(&image.width.to_le_bytes());
    bytes.extend_from_slice(&image.height.to_le_bytes());
    bytes.extend_from_slice(&image.depth.to_le_bytes());
    for v in &image.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|source| MhiError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_mhi(path: &Path) -> Result<MotionHistoryImage, MhiError> {
    let bytes = fs::read(path).map_err(|source| MhiError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |reason: &str| MhiError::BadFile {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 16 {
        return Err(bad("file too short for an MHI header"));
    }
    if &bytes[0..4] != MHI_MAGIC {
        return Err(bad("missing MHI1 magic"));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let width = u32_at(4);
    let height = u32_at(8);
    let depth = u32_at(12);
    let len = (width as usize) * (height as usize);
    if bytes.len() != 16 + len * 4 {
        return Err(bad(&format!(
            "expected {} value bytes, found {}",
            len * 4,
            bytes.len() - 16
        )));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(MotionHistoryImage {
        width,
        height,
        depth,
        values,
    })
}

pub fn export_png(path: &Path, image: &MotionHistoryImage) -> Result<(), MhiError> {
    let raster = Raster8::from_mhi(image);
    crate::silhouette::save_gray_png(path, raster.width, raster.height, &raster.pixels).map_err(
        |e| MhiError::BadFile {
            path: path.to_path_buf(),
            reason: e.to_string(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::silhouette::{stack, BinaryFrame};
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha8Rng;

    fn frame(width: u32, height: u32, mask: &[u8]) -> BinaryFrame {
        BinaryFrame::new(width, height, mask.to_vec()).unwrap()
    }

    fn mhi_of(frames: &[BinaryFrame]) -> MotionHistoryImage {
        generate_mhi(&stack(frames, frames.len()).unwrap())
    }

    #[test]
    fn decay_examples() {
        assert_eq!(decay(10, 0).unwrap(), 1.0);
        assert_eq!(decay(10, 9).unwrap(), 0.1);
        assert_eq!(decay(1, 0).unwrap(), 1.0);
        assert!(matches!(
            decay(10, 10),
            Err(MhiError::IndexOutOfRange { n: 10, t: 10 })
        ));
        assert!(matches!(decay(0, 0), Err(MhiError::IndexOutOfRange { .. })));
    }

    #[test]
    fn decay_schedule_is_strictly_decreasing_from_one() {
        for n in [1usize, 2, 5, 20] {
            let schedule = DecaySchedule::new(n).unwrap();
            assert_eq!(schedule.values()[0], 1.0);
            assert_eq!(schedule.values().len(), n);
            assert!(schedule.values().windows(2).all(|w| w[1] < w[0]));
            assert!((schedule.values()[n - 1] - 1.0 / n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn all_background_stack_yields_all_zero_mhi() {
        let frames: Vec<BinaryFrame> = (0..5).map(|_| BinaryFrame::zeros(4, 3)).collect();
        let mhi = mhi_of(&frames);
        assert!(mhi.values().iter().all(|&v| v == 0.0));
        assert_eq!(mhi.depth(), 5);
    }

    #[test]
    fn pixel_foreground_only_in_the_oldest_frame_gets_the_smallest_weight() {
        // oldest frame = input index 0; stack depth 10 -> weight 1/10
        let mut frames: Vec<BinaryFrame> = (0..10).map(|_| BinaryFrame::zeros(3, 3)).collect();
        frames[0] = frame(3, 3, &[0, 0, 0, 0, 1, 0, 0, 0, 0]);
        let mhi = mhi_of(&frames);
        assert_eq!(mhi.get(1, 1), 0.1f32);
        assert_eq!(mhi.values().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn more_recent_foreground_overwrites_older_weights() {
        // foreground at ages t = 7 and t = 2 within a depth-10 stack:
        // the t = 2 occurrence wins with weight (10 - 2) / 10 = 0.8
        let mut frames: Vec<BinaryFrame> = (0..10).map(|_| BinaryFrame::zeros(2, 2)).collect();
        let fg = frame(2, 2, &[1, 0, 0, 0]);
        frames[2] = fg.clone(); // age 7
        frames[7] = fg; // age 2
        let mhi = mhi_of(&frames);
        assert_eq!(mhi.get(0, 0), 0.8f32);
    }

    #[test]
    fn currently_foreground_pixels_are_exactly_one() {
        let mut frames: Vec<BinaryFrame> = (0..20).map(|_| BinaryFrame::zeros(2, 1)).collect();
        frames[19] = frame(2, 1, &[1, 0]);
        let mhi = mhi_of(&frames);
        assert_eq!(mhi.get(0, 0), 1.0f32);
        assert_eq!(mhi.get(1, 0), 0.0f32);
    }

    /// Literal transcription of the generation rule as a loop from the
    /// oldest frame down to the newest, overwriting as it goes.
    fn mhi_transcription(s: &crate::silhouette::SilhouetteStack) -> Vec<f32> {
        let n = s.depth();
        let len = (s.width() as usize) * (s.height() as usize);
        let mut out = vec![0.0f32; len];
        for t in (0..n).rev() {
            let tau = ((n - t) as f64 / n as f64) as f32;
            for (o, &m) in out.iter_mut().zip(s.frame(t).mask()) {
                if m == 1 {
                    *o = tau;
                }
            }
        }
        out
    }

    #[test]
    fn closed_form_matches_the_loop_transcription_on_random_stacks() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for n in [1usize, 5, 20] {
            for _ in 0..200 {
                let frames: Vec<BinaryFrame> = (0..n)
                    .map(|_| {
                        let mask: Vec<u8> = (0..64).map(|_| rng.gen_range(0..=1u8)).collect();
                        frame(8, 8, &mask)
                    })
                    .collect();
                let s = stack(&frames, n).unwrap();
                let got = generate_mhi(&s);
                assert_eq!(got.values(), mhi_transcription(&s).as_slice());
            }
        }
    }

    proptest! {
        #[test]
        fn mhi_values_come_from_the_decay_set(
            bits in proptest::collection::vec(proptest::bool::ANY, 7 * 36),
        ) {
            let frames: Vec<BinaryFrame> = bits
                .chunks(36)
                .map(|chunk| {
                    let mask: Vec<u8> = chunk.iter().map(|&b| u8::from(b)).collect();
                    frame(6, 6, &mask)
                })
                .collect();
            let mhi = mhi_of(&frames);
            let allowed: Vec<f32> = (0..7)
                .map(|t| decay(7, t).unwrap() as f32)
                .chain(std::iter::once(0.0))
                .collect();
            for &v in mhi.values() {
                prop_assert!(allowed.contains(&v), "value {v} not in the decay set");
            }
            // newest frame's foreground is exactly 1
            for (i, &m) in frames[6].mask().iter().enumerate() {
                if m == 1 {
                    prop_assert_eq!(mhi.values()[i], 1.0f32);
                }
            }
        }
    }

    #[test]
    fn resize_to_the_same_size_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f32> = (0..12 * 9).map(|_| rng.gen::<f32>()).collect();
        let img = MotionHistoryImage::new(12, 9, 20, values.clone());
        let out = resize_bilinear(&img, 12, 9).unwrap();
        assert_eq!(out.values(), values.as_slice());
    }

    #[test]
    fn resize_of_a_constant_image_is_constant() {
        let img = MotionHistoryImage::new(192, 160, 20, vec![0.4f32; 192 * 160]);
        let out = resize_bilinear(&img, 128, 96).unwrap();
        assert_eq!((out.width(), out.height()), (128, 96));
        for &v in out.values() {
            assert!((v - 0.4).abs() < 1e-6);
        }
    }

    #[test]
    fn downscaling_a_column_pair_averages_it() {
        // two identical rows [0, 1]; halving the height averages each column
        // pair, leaving the columns' values untouched
        let img = MotionHistoryImage::new(2, 2, 20, vec![0.0, 1.0, 0.0, 1.0]);
        let out = resize_bilinear(&img, 2, 1).unwrap();
        assert_eq!(out.values(), &[0.0, 1.0]);

        // and a genuine mix: rows [0, 0], [1, 1] -> each output pixel is the
        // mean of its column pair = 0.5
        let img = MotionHistoryImage::new(2, 2, 20, vec![0.0, 0.0, 1.0, 1.0]);
        let out = resize_bilinear(&img, 2, 1).unwrap();
        assert_eq!(out.values(), &[0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn resize_preserves_the_value_range(
            values in proptest::collection::vec(0f32..=1.0, 10 * 8),
            w in 1u32..24,
            h in 1u32..20,
        ) {
            let img = MotionHistoryImage::new(10, 8, 20, values.clone());
            let lo = values.iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = values.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let out = resize_bilinear(&img, w, h).unwrap();
            for &v in out.values() {
                prop_assert!(v >= lo - 1e-6 && v <= hi + 1e-6);
            }
        }
    }

    #[test]
    fn mhi_file_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f32> = (0..30 * 20).map(|_| rng.gen::<f32>()).collect();
        let img = MotionHistoryImage::new(30, 20, 20, values);
        let path = dir.path().join("x.mhi");
        write_mhi(&path, &img).unwrap();
        let back = read_mhi(&path).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn reading_garbage_fails_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mhi");
        std::fs::write(&path, b"not an mhi").unwrap();
        assert!(matches!(read_mhi(&path), Err(MhiError::BadFile { .. })));
        std::fs::write(&path, b"MHI1\x02\x00\x00\x00\x02\x00\x00\x00\x05\x00\x00\x00").unwrap();
        assert!(matches!(read_mhi(&path), Err(MhiError::BadFile { .. })));
    }

    #[test]
    fn raster_export_quantization_is_lossless_for_small_depths() {
        let n = 20usize;
        let values: Vec<f32> = (0..n)
            .map(|t| decay(n, t).unwrap() as f32)
            .chain(std::iter::once(0.0))
            .collect();
        let img = MotionHistoryImage::new(values.len() as u32, 1, n as u32, values.clone());
        let raster = Raster8::from_mhi(&img);
        // distinct inputs stay distinct
        let mut seen = raster.pixels.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), values.len());
        assert_eq!(raster.pixels[0], 255);
        assert_eq!(*raster.pixels.last().unwrap(), 0);
    }
}
