//! Gradient orientation cell histograms computed on motion history images.
//!
//! Central differences with the kernel (-1, 0, 1) applied as written (no
//! 1/2 factor) and edge replication yield per-pixel gradient magnitude and
//! orientation. Each pixel votes its full magnitude into the two nearest
//! orientation bin centers by linear interpolation, wrapping circularly.
//! Cell histograms are concatenated row-major with bins contiguous per
//! cell, and deliberately *not* block-normalized: MHI values already live
//! in [0, 1], so the absolute gradient energy carries signal.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mhi::MotionHistoryImage;

#[derive(Debug, Error)]
pub enum MchogError {
    #[error("image is {got_w}x{got_h} but the descriptor expects {want_w}x{want_h}")]
    DimensionMismatch {
        want_w: u32,
        want_h: u32,
        got_w: u32,
        got_h: u32,
    },
    #[error("invalid descriptor parameters: {0}")]
    InvalidParams(String),
    #[error("bad sample file: {0}")]
    BadSampleFile(String),
}

/// Descriptor geometry. Cell sizes must divide the input size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MchogParams {
    pub input_w: u32,
    pub input_h: u32,
    pub cell_w: u32,
    pub cell_h: u32,
    pub n_bins: u32,
    /// `false` folds orientations into [0deg, 180deg); `true` keeps the full
    /// [0deg, 360deg) circle.
    pub signed: bool,
}

impl Default for MchogParams {
    fn default() -> Self {
        Self {
            input_w: 128,
            input_h: 96,
            cell_w: 32,
            cell_h: 8,
            n_bins: 18,
            signed: false,
        }
    }
}

impl MchogParams {
    pub fn validate(&self) -> Result<(), MchogError> {
        if self.input_w == 0 || self.input_h == 0 || self.cell_w == 0 || self.cell_h == 0 {
            return Err(MchogError::InvalidParams(
                "sizes must be positive".into(),
            ));
        }
        if !self.input_w.is_multiple_of(self.cell_w) || !self.input_h.is_multiple_of(self.cell_h) {
            return Err(MchogError::InvalidParams(format!(
                "cells of {}x{} do not tile a {}x{} image",
                self.cell_w, self.cell_h, self.input_w, self.input_h
            )));
        }
        if self.n_bins < 2 {
            return Err(MchogError::InvalidParams(
                "need at least 2 orientation bins".into(),
            ));
        }
        Ok(())
    }

    pub fn cells_x(&self) -> u32 {
        self.input_w / self.cell_w
    }

    pub fn cells_y(&self) -> u32 {
        self.input_h / self.cell_h
    }

    pub fn orientation_range(&self) -> f64 {
        if self.signed {
            360.0
        } else {
            180.0
        }
    }
}

/// Descriptor length: cells times bins.
pub fn descriptor_length(params: &MchogParams) -> usize {
    (params.cells_x() as usize) * (params.cells_y() as usize) * (params.n_bins as usize)
}

/// Per-pixel gradient magnitude and orientation (degrees).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: u32,
    pub height: u32,
    pub magnitude: Vec<f64>,
    /// In `[0, 180)` unsigned or `[0, 360)` signed.
    pub orientation: Vec<f64>,
}

/// Central differences with edge replication, magnitude and orientation.
pub fn gradients(image: &MotionHistoryImage, signed: bool) -> GradientField {
    let w = image.width() as usize;
    let h = image.height() as usize;
    let v = image.values();
    let range = if signed { 360.0 } else { 180.0 };
    let mut magnitude = vec![0.0f64; w * h];
    let mut orientation = vec![0.0f64; w * h];
    for y in 0..h {
        let y_up = y.saturating_sub(1);
        let y_down = (y + 1).min(h - 1);
        for x in 0..w {
            let x_left = x.saturating_sub(1);
            let x_right = (x + 1).min(w - 1);
            let gx = v[y * w + x_right] as f64 - v[y * w + x_left] as f64;
            let gy = v[y_down * w + x] as f64 - v[y_up * w + x] as f64;
            let i = y * w + x;
            magnitude[i] = (gx * gx + gy * gy).sqrt();
            if magnitude[i] > 0.0 {
                let mut theta = gy.atan2(gx).to_degrees();
                if theta < 0.0 {
                    theta += 360.0;
                }
                if theta >= range {
                    theta -= range; // folds e.g. 200deg to 20deg when unsigned
                }
                if theta >= range {
                    theta -= range;
                }
                orientation[i] = theta;
            }
        }
    }
    GradientField {
        width: image.width(),
        height: image.height(),
        magnitude,
        orientation,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f64>,
}

/// Accumulate the per-cell orientation histograms. Each pixel's magnitude
/// is split linearly between the two bin centers bracketing its
/// orientation, wrapping across the histogram ends.
pub fn cell_histograms(
    field: &GradientField,
    params: &MchogParams,
) -> Result<Descriptor, MchogError> {
    params.validate()?;
    if field.width != params.input_w || field.height != params.input_h {
        return Err(MchogError::DimensionMismatch {
            want_w: params.input_w,
            want_h: params.input_h,
            got_w: field.width,
            got_h: field.height,
        });
    }
    let n_bins = params.n_bins as usize;
    let bin_width = params.orientation_range() / params.n_bins as f64;
    let cells_x = params.cells_x() as usize;
    let w = params.input_w as usize;
    let mut values = vec![0.0f64; descriptor_length(params)];
    for y in 0..params.input_h as usize {
        let cell_row = y / params.cell_h as usize;
        for x in 0..w {
            let i = y * w + x;
            let mag = field.magnitude[i];
            if mag == 0.0 {
                continue;
            }
            let cell = cell_row * cells_x + x / params.cell_w as usize;
            let hist = &mut values[cell * n_bins..(cell + 1) * n_bins];
            // distance in bins from the first bin center
            let pos = field.orientation[i] / bin_width - 0.5;
            let lower = pos.floor();
            let frac = pos - lower;
            let lo = (lower.rem_euclid(n_bins as f64)) as usize;
            let hi = (lo + 1) % n_bins;
            hist[lo] += mag * (1.0 - frac);
            hist[hi] += mag * frac;
        }
    }
    Ok(Descriptor { values })
}

/// Resize-free descriptor of an image already at the configured input size.
pub fn descriptor(
    image: &MotionHistoryImage,
    params: &MchogParams,
) -> Result<Descriptor, MchogError> {
    params.validate()?;
    if image.width() != params.input_w || image.height() != params.input_h {
        return Err(MchogError::DimensionMismatch {
            want_w: params.input_w,
            want_h: params.input_h,
            got_w: image.width(),
            got_h: image.height(),
        });
    }
    cell_histograms(&gradients(image, params.signed), params)
}

/// One `label,v0,v1,...` row per sample; labels are -1 (waiting) or +1
/// (moving). Values round-trip exactly.
pub fn write_samples<W: Write>(
    mut out: W,
    samples: &[(i8, &[f64])],
) -> Result<(), std::io::Error> {
    for (label, values) in samples {
        write!(out, "{label}")?;
        for v in *values {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_samples<R: BufRead>(reader: R) -> Result<Vec<(i8, Vec<f64>)>, MchogError> {
    let mut samples = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| MchogError::BadSampleFile(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label: i8 = fields
            .next()
            .unwrap()
            .parse()
            .map_err(|e| MchogError::BadSampleFile(format!("line {}: {e}", lineno + 1)))?;
        if label != -1 && label != 1 {
            return Err(MchogError::BadSampleFile(format!(
                "line {}: label must be -1 or +1, got {label}",
                lineno + 1
            )));
        }
        let values: Result<Vec<f64>, _> = fields.map(str::parse::<f64>).collect();
        let values =
            values.map_err(|e| MchogError::BadSampleFile(format!("line {}: {e}", lineno + 1)))?;
        samples.push((label, values));
    }
    Ok(samples)
}
