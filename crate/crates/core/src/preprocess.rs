//! Image decoding, box-filter downsampling and look-back window assembly.
//!
//! A sky image becomes an `M×M×3` array flattened row by row, then column, then channel
//! (R, G, B), with values scaled into `[0, 1]`. Forecast rows concatenate the pixel vectors
//! of `m` consecutive frames, oldest first.

use chrono::Duration;
use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GhiError, Result};
use crate::ingest::{AlignedSample, ImageRecord};
use crate::time::Timestamp;

/// Consecutive frames further apart than this multiple of the cadence break a window.
pub const GAP_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PixelVector {
    pub values: Vec<f64>,
    pub source_timestamp: Timestamp,
}

/// Dense row-major matrix with one timestamp per row.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub row_timestamps: Vec<Timestamp>,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        FeatureMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            row_timestamps: Vec::new(),
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(GhiError::Shape(format!(
                "{} values cannot fill a {rows}×{cols} matrix",
                data.len()
            )));
        }
        Ok(FeatureMatrix {
            rows,
            cols,
            data,
            row_timestamps: Vec::new(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(GhiError::Shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        FeatureMatrix::from_vec(rows.len(), cols, data)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
            row_timestamps: if self.row_timestamps.len() == self.rows {
                indices.iter().map(|&i| self.row_timestamps[i]).collect()
            } else {
                Vec::new()
            },
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Feature rows with their targets and the bookkeeping needed for evaluation.
#[derive(Debug, Clone, Default)]
pub struct WindowedSet {
    pub features: FeatureMatrix,
    /// Ground truth at the predicted instant.
    pub targets: Vec<f64>,
    /// GHI observed at the anchor (latest input) frame.
    pub anchor_ghi: Vec<f64>,
    pub anchor_times: Vec<Timestamp>,
    pub target_times: Vec<Timestamp>,
    /// Samples that could not be decoded.
    pub skipped: usize,
    /// Why the set is empty, when it is.
    pub note: Option<String>,
}

impl WindowedSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Decodes an image file and downsamples it to an `M×M×3` pixel vector.
pub fn decode_and_resize(record: &ImageRecord, side: usize) -> Result<PixelVector> {
    if side < 2 {
        return Err(GhiError::Config(format!("image side M must be ≥ 2, got {side}")));
    }
    let img = image::open(&record.path).map_err(|e| GhiError::Decode {
        path: record.path.clone(),
        message: e.to_string(),
    })?;
    Ok(PixelVector {
        values: area_downsample(&img.to_rgb8(), side),
        source_timestamp: record.timestamp,
    })
}

/// Box-filter resampling to `side×side`: each output pixel is the area-weighted mean of
/// the source pixels its footprint covers, so fractional scale factors are exact.
pub fn area_downsample(img: &RgbImage, side: usize) -> Vec<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let wy = axis_weights(h, side);
    let wx = axis_weights(w, side);
    let raw = img.as_raw();
    let mut out = vec![0.0; side * side * 3];

    // Horizontal pass per source row, then vertical accumulation.
    let mut horiz = vec![0.0; h * side * 3];
    for y in 0..h {
        for (ox, weights) in wx.iter().enumerate() {
            let mut acc = [0.0f64; 3];
            for &(x, wgt) in weights {
                let p = (y * w + x) * 3;
                acc[0] += wgt * raw[p] as f64;
                acc[1] += wgt * raw[p + 1] as f64;
                acc[2] += wgt * raw[p + 2] as f64;
            }
            let q = (y * side + ox) * 3;
            horiz[q..q + 3].copy_from_slice(&acc);
        }
    }
    let area = |weights: &[(usize, f64)]| weights.iter().map(|w| w.1).sum::<f64>();
    for (oy, weights) in wy.iter().enumerate() {
        let area_y = area(weights);
        for (ox, x_weights) in wx.iter().enumerate() {
            let norm = 255.0 * area_y * area(x_weights);
            let mut acc = [0.0f64; 3];
            for &(y, wgt) in weights {
                let q = (y * side + ox) * 3;
                acc[0] += wgt * horiz[q];
                acc[1] += wgt * horiz[q + 1];
                acc[2] += wgt * horiz[q + 2];
            }
            let o = (oy * side + ox) * 3;
            for c in 0..3 {
                out[o + c] = (acc[c] / norm).clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// For each output cell, the (source index, overlap length) pairs along one axis.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let start = o as f64 * scale;
            let end = (o + 1) as f64 * scale;
            let first = start.floor() as usize;
            let last = (end.ceil() as usize).min(src);
            let weights: Vec<(usize, f64)> = (first..last)
                .map(|s| {
                    let lo = start.max(s as f64);
                    let hi = end.min((s + 1) as f64);
                    (s, (hi - lo).max(0.0))
                })
                .filter(|&(_, wgt)| wgt > 0.0)
                .collect();
            weights
        })
        .collect()
}

/// Decoded pixel vectors for a run of aligned samples, in timestamp order.
#[derive(Debug, Clone, Default)]
pub struct FrameSeries {
    pub side: usize,
    pub timestamps: Vec<Timestamp>,
    pub ghi: Vec<f64>,
    pub pixels: Vec<Vec<f64>>,
    /// Samples dropped because their image could not be decoded.
    pub skipped: usize,
}

impl FrameSeries {
    /// Decodes every sample image (in parallel); failures are counted and skipped.
    pub fn decode(samples: &[AlignedSample], side: usize) -> Result<Self> {
        if side < 2 {
            return Err(GhiError::Config(format!("image side M must be ≥ 2, got {side}")));
        }
        let decoded: Vec<Option<Vec<f64>>> = samples
            .par_iter()
            .map(|s| match decode_and_resize(&s.image, side) {
                Ok(p) => Some(p.values),
                Err(e) => {
                    log::warn!("{e}");
                    None
                }
            })
            .collect();
        let mut series = FrameSeries {
            side,
            ..Default::default()
        };
        for (sample, pixels) in samples.iter().zip(decoded) {
            match pixels {
                Some(p) => {
                    series.timestamps.push(sample.timestamp);
                    series.ghi.push(sample.ghi);
                    series.pixels.push(p);
                }
                None => series.skipped += 1,
            }
        }
        Ok(series)
    }

    pub fn from_parts(
        side: usize,
        timestamps: Vec<Timestamp>,
        ghi: Vec<f64>,
        pixels: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let dim = side * side * 3;
        if timestamps.len() != ghi.len() || ghi.len() != pixels.len() {
            return Err(GhiError::Shape("frame parts differ in length".into()));
        }
        if let Some(bad) = pixels.iter().position(|p| p.len() != dim) {
            return Err(GhiError::Shape(format!(
                "frame {bad} has {} values, expected {dim}",
                pixels[bad].len()
            )));
        }
        Ok(FrameSeries {
            side,
            timestamps,
            ghi,
            pixels,
            skipped: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn frame_dim(&self) -> usize {
        self.side * self.side * 3
    }

    /// One row per frame; the target is the GHI at the frame's own timestamp.
    pub fn nowcast(&self) -> WindowedSet {
        let anchors: Vec<usize> = (0..self.len()).collect();
        self.assemble(&anchors, 1, 0)
    }

    /// Look-back rows of `lookback` frames predicting `horizon_steps` frames ahead.
    pub fn lookback(&self, lookback: usize, horizon_steps: usize, cadence: Duration) -> WindowedSet {
        let anchors = window_anchors(&self.timestamps, lookback, horizon_steps, cadence);
        let mut set = self.assemble(&anchors, lookback.max(1), horizon_steps);
        if set.is_empty() {
            set.note = Some(if lookback == 0 {
                "look-back depth must be at least 1".to_string()
            } else if lookback + horizon_steps > self.len() {
                format!(
                    "look-back {lookback} plus horizon {horizon_steps} exceeds the {} available frames",
                    self.len()
                )
            } else {
                format!(
                    "no gap-free run of {} frames at {}-minute cadence",
                    lookback + horizon_steps,
                    cadence.num_minutes()
                )
            });
        }
        set
    }

    fn assemble(&self, anchors: &[usize], lookback: usize, horizon_steps: usize) -> WindowedSet {
        let dim = self.frame_dim();
        let cols = dim * lookback;
        let mut data = Vec::with_capacity(anchors.len() * cols);
        let mut set = WindowedSet {
            skipped: self.skipped,
            ..Default::default()
        };
        for &a in anchors {
            for j in (a + 1 - lookback)..=a {
                data.extend_from_slice(&self.pixels[j]);
            }
            let target = a + horizon_steps;
            set.targets.push(self.ghi[target]);
            set.anchor_ghi.push(self.ghi[a]);
            set.anchor_times.push(self.timestamps[a]);
            set.target_times.push(self.timestamps[target]);
        }
        set.features = FeatureMatrix {
            rows: anchors.len(),
            cols,
            data,
            row_timestamps: set.anchor_times.clone(),
        };
        set
    }
}

/// Anchor indices `t` for which frames `t-m+1..=t` and the target `t+h` exist with every
/// consecutive gap at most `GAP_FACTOR × cadence`.
pub fn window_anchors(
    timestamps: &[Timestamp],
    lookback: usize,
    horizon_steps: usize,
    cadence: Duration,
) -> Vec<usize> {
    let n = timestamps.len();
    if lookback == 0 || lookback + horizon_steps > n {
        return Vec::new();
    }
    let max_gap_s = GAP_FACTOR * cadence.num_seconds() as f64;
    // bad_prefix[i] = number of broken gaps among (j, j+1) for j < i
    let mut bad_prefix = vec![0usize; n];
    for i in 1..n {
        let gap = (timestamps[i] - timestamps[i - 1]).num_seconds() as f64;
        bad_prefix[i] = bad_prefix[i - 1] + usize::from(gap > max_gap_s || gap <= 0.0);
    }
    (lookback - 1..n - horizon_steps)
        .filter(|&a| {
            let first = a + 1 - lookback;
            let last = a + horizon_steps;
            bad_prefix[last] - bad_prefix[first] == 0
        })
        .collect()
}

/// Decodes the samples and builds the nowcast set.
pub fn build_nowcast(samples: &[AlignedSample], side: usize) -> Result<WindowedSet> {
    if samples.is_empty() {
        return Err(GhiError::EmptyInput("no samples for nowcast features".into()));
    }
    Ok(FrameSeries::decode(samples, side)?.nowcast())
}

/// Decodes the samples and builds look-back rows for one forecast horizon.
pub fn build_lookback(
    samples: &[AlignedSample],
    side: usize,
    lookback: usize,
    horizon_steps: usize,
    cadence: Duration,
) -> Result<WindowedSet> {
    if lookback == 0 {
        return Err(GhiError::Config("look-back depth m must be ≥ 1".into()));
    }
    if horizon_steps == 0 {
        return Err(GhiError::Config(
            "horizon_steps must be ≥ 1; use build_nowcast for horizon 0".into(),
        ));
    }
    Ok(FrameSeries::decode(samples, side)?.lookback(lookback, horizon_steps, cadence))
}
