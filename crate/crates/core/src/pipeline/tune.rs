//! Grid sweep over SVD rank `k` and look-back depth `m`.
//!
//! Cells are scored on a chronological hold-out: the last fifth of the supplied samples.
//! For each `(m, horizon)` the reducer is fitted once at the largest feasible rank in the
//! grid and truncated for the smaller ranks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{horizon_seed, PipelineConfig};
use crate::error::{GhiError, Result};
use crate::ingest::AlignedSample;
use crate::lsa;
use crate::metrics::nmape;
use crate::preprocess::{FeatureMatrix, FrameSeries};

pub const VALIDATION_FRACTION: f64 = 0.2;
pub const TUNING_CSV_HEADER: &str = "k,lookback_min,horizon,nmape_pct,status";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRow {
    pub k: usize,
    pub lookback_min: i64,
    pub horizon: String,
    pub nmape_pct: Option<f64>,
    /// Set when the cell could not be scored.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub rows: Vec<TuningRow>,
    /// `(k, lookback_min)` with the lowest mean nMAPE over horizons. Cells with any
    /// failed horizon are not eligible; ties go to the earlier cell in grid order.
    pub argmin: Option<(usize, i64)>,
    pub train_frames: usize,
    pub validation_frames: usize,
}

impl TuningReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{TUNING_CSV_HEADER}\n");
        for r in &self.rows {
            let value = r.nmape_pct.map(|v| format!("{v:.6}")).unwrap_or_default();
            let status = match &r.error {
                None => "ok".to_string(),
                Some(e) => format!("\"failed: {}\"", e.replace('"', "'")),
            };
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.k, r.lookback_min, r.horizon, value, status
            ));
        }
        out
    }

    pub fn rows_for(&self, horizon: &str) -> impl Iterator<Item = &TuningRow> {
        let horizon = horizon.to_string();
        self.rows.iter().filter(move |r| r.horizon == horizon)
    }
}

/// Decodes `samples` at the base configuration's image side and runs the sweep.
pub fn tune(
    base: &PipelineConfig,
    ks: &[usize],
    ms: &[usize],
    samples: &[AlignedSample],
) -> Result<TuningReport> {
    check_grid(base, ks, ms)?;
    let frames = FrameSeries::decode(samples, base.image_side)?;
    tune_frames(base, ks, ms, &frames)
}

fn check_grid(base: &PipelineConfig, ks: &[usize], ms: &[usize]) -> Result<()> {
    base.validate()?;
    if ks.is_empty() || ms.is_empty() {
        return Err(GhiError::Config("tuning grid needs at least one k and one m".into()));
    }
    if ks.contains(&0) || ms.contains(&0) {
        return Err(GhiError::Config("grid values of k and m must be ≥ 1".into()));
    }
    Ok(())
}

fn slice(frames: &FrameSeries, range: std::ops::Range<usize>) -> FrameSeries {
    FrameSeries {
        side: frames.side,
        timestamps: frames.timestamps[range.clone()].to_vec(),
        ghi: frames.ghi[range.clone()].to_vec(),
        pixels: frames.pixels[range].to_vec(),
        skipped: 0,
    }
}

pub fn tune_frames(
    base: &PipelineConfig,
    ks: &[usize],
    ms: &[usize],
    frames: &FrameSeries,
) -> Result<TuningReport> {
    check_grid(base, ks, ms)?;
    let n = frames.len();
    if n < 2 {
        return Err(GhiError::EmptyInput(format!(
            "tuning needs at least 2 frames, got {n}"
        )));
    }
    let n_val = ((n as f64 * VALIDATION_FRACTION).round() as usize).clamp(1, n - 1);
    let train = slice(frames, 0..n - n_val);
    let val = slice(frames, n - n_val..n);
    let cadence = base.cadence();

    // Scores keyed by (m index, k index, horizon index).
    let mut cells: BTreeMap<(usize, usize, usize), std::result::Result<f64, String>> =
        BTreeMap::new();
    for (mi, &m) in ms.iter().enumerate() {
        for (hi, &steps) in base.horizons.iter().enumerate() {
            let scores = score_column(base, ks, m, steps, &train, &val, cadence);
            for (ki, score) in scores.into_iter().enumerate() {
                cells.insert((mi, ki, hi), score);
            }
        }
    }

    let mut rows = Vec::new();
    let mut best: Option<(f64, usize, i64)> = None;
    for (ki, &k) in ks.iter().enumerate() {
        for (mi, &m) in ms.iter().enumerate() {
            let lookback_min = m as i64 * base.cadence_min;
            let mut total = 0.0;
            let mut complete = true;
            for (hi, &steps) in base.horizons.iter().enumerate() {
                let cell = &cells[&(mi, ki, hi)];
                match cell {
                    Ok(v) => total += v,
                    Err(_) => complete = false,
                }
                rows.push(TuningRow {
                    k,
                    lookback_min,
                    horizon: base.horizon_label(steps),
                    nmape_pct: cell.as_ref().ok().copied(),
                    error: cell.as_ref().err().cloned(),
                });
            }
            if complete && !base.horizons.is_empty() {
                let mean = total / base.horizons.len() as f64;
                if best.is_none_or(|(b, _, _)| mean < b) {
                    best = Some((mean, k, lookback_min));
                }
            }
        }
    }

    Ok(TuningReport {
        rows,
        argmin: best.map(|(_, k, l)| (k, l)),
        train_frames: train.len(),
        validation_frames: val.len(),
    })
}

/// Scores every `k` for one `(m, horizon)` pair.
fn score_column(
    base: &PipelineConfig,
    ks: &[usize],
    m: usize,
    steps: usize,
    train: &FrameSeries,
    val: &FrameSeries,
    cadence: chrono::Duration,
) -> Vec<std::result::Result<f64, String>> {
    let fail_all = |msg: String| ks.iter().map(|_| Err(msg.clone())).collect();
    let train_set = train.lookback(m, steps, cadence);
    let val_set = val.lookback(m, steps, cadence);
    if train_set.is_empty() {
        return fail_all(format!(
            "no training windows: {}",
            train_set.note.unwrap_or_default()
        ));
    }
    if val_set.is_empty() {
        return fail_all(format!(
            "no validation windows: {}",
            val_set.note.unwrap_or_default()
        ));
    }
    let limit = train_set.features.rows.min(train_set.features.cols);
    let k_fit = match ks.iter().copied().filter(|&k| k <= limit).max() {
        Some(k) => k,
        None => return fail_all(format!("every k exceeds the matrix rank limit {limit}")),
    };
    let seed = horizon_seed(base.seed, steps);
    let (model, embedded) = match lsa::fit(&train_set.features, &base.lsa_config(k_fit, seed)) {
        Ok(fitted) => fitted,
        Err(e) => return fail_all(e.to_string()),
    };
    let val_embedded = match lsa::transform(&model, &val_set.features) {
        Ok(t) => t,
        Err(e) => return fail_all(e.to_string()),
    };
    ks.iter()
        .map(|&k| {
            if k > limit {
                return Err(format!("k={k} exceeds the matrix rank limit {limit}"));
            }
            let x = leading(&embedded, k);
            let regressor = base
                .regressor
                .fit(&x, &train_set.targets, seed)
                .map_err(|e| e.to_string())?;
            let predicted = regressor
                .predict(&leading(&val_embedded, k))
                .map_err(|e| e.to_string())?;
            nmape(&val_set.targets, &predicted).map_err(|e| e.to_string())
        })
        .collect()
}

fn leading(x: &FeatureMatrix, k: usize) -> FeatureMatrix {
    let mut data = Vec::with_capacity(x.rows * k);
    for row in x.iter_rows() {
        data.extend_from_slice(&row[..k]);
    }
    FeatureMatrix {
        rows: x.rows,
        cols: k,
        data,
        row_timestamps: x.row_timestamps.clone(),
    }
}
