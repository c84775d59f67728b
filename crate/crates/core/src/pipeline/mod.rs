//! End-to-end training, evaluation and single-shot forecasting.
//!
//! The nowcast model regresses on raw pixel vectors. Every forecast horizon gets its own
//! look-back matrix, truncated-SVD reducer and regressor. Training and evaluation build
//! their rows through the same [`FrameSeries::lookback`] call.

pub mod bundle;
pub mod config;
pub mod tune;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{GhiError, Result};
use crate::ingest::{
    align, count_gaps, load_ghi_series, scan_image_directory, split, AlignedSample, ImageRecord,
};
use crate::lsa::{self, LsaModel};
use crate::metrics::{hourly_csv, report_csv, EvalReport};
use crate::preprocess::{decode_and_resize, window_anchors, FeatureMatrix, FrameSeries, GAP_FACTOR};
use crate::regress::RegressorModel;
use crate::time::{format_utc, Timestamp};

pub use bundle::{load_bundle, load_bundle_strict, save_bundle};
pub use config::{horizon_label, PipelineConfig};
pub use tune::{tune, TuningReport, TuningRow};

/// Counts gathered while loading and aligning a dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub images_found: usize,
    pub files_skipped: usize,
    pub duplicate_images: usize,
    pub readings: usize,
    pub clamped_readings: usize,
    pub aligned: usize,
    pub dropped_unmatched: usize,
    pub removed_night: usize,
    pub samples: usize,
    pub gaps: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<AlignedSample>,
    pub summary: DatasetSummary,
}

/// Scans images, loads GHI, aligns, and applies the night filter.
pub fn load_dataset(images_dir: &Path, ghi_csv: &Path, config: &PipelineConfig) -> Result<Dataset> {
    let scan = scan_image_directory(images_dir, &config.pattern()?)?;
    let series = load_ghi_series(ghi_csv)?;
    let alignment = align(
        &scan.records,
        &series.readings,
        chrono::Duration::minutes(config.align_tolerance_min),
    );
    let aligned = alignment.samples.len();
    let (samples, removed_night) = config.daylight.apply(alignment.samples, config.offset());
    let max_gap = chrono::Duration::seconds(
        (GAP_FACTOR * config.cadence().num_seconds() as f64).round() as i64,
    );
    let summary = DatasetSummary {
        images_found: scan.records.len(),
        files_skipped: scan.skipped,
        duplicate_images: scan.duplicates,
        readings: series.readings.len(),
        clamped_readings: series.clamped,
        aligned,
        dropped_unmatched: alignment.dropped,
        removed_night,
        samples: samples.len(),
        gaps: count_gaps(&samples, max_gap),
    };
    Ok(Dataset { samples, summary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonModel {
    pub steps: usize,
    pub label: String,
    pub lsa: LsaModel,
    pub regressor: RegressorModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub train_samples: usize,
    pub skipped_images: usize,
    pub nowcast_rows: usize,
    /// Training rows per horizon, in horizon order.
    pub horizon_rows: Vec<usize>,
    pub first_timestamp: Option<Timestamp>,
    pub last_timestamp: Option<Timestamp>,
    /// Wall-clock fit time; kept out of the manifest so bundles stay reproducible.
    #[serde(skip)]
    pub fit_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: PipelineConfig,
    pub nowcast: RegressorModel,
    pub horizons: Vec<HorizonModel>,
    pub meta: TrainingMeta,
}

fn horizon_seed(seed: u64, steps: usize) -> u64 {
    seed ^ (steps as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Decodes the training samples and fits every model in the bundle.
pub fn train(config: &PipelineConfig, samples: &[AlignedSample]) -> Result<ModelBundle> {
    config.validate()?;
    if samples.is_empty() {
        return Err(GhiError::EmptyInput("no training samples".into()));
    }
    let frames = FrameSeries::decode(samples, config.image_side)?;
    train_on_frames(config, &frames)
}

pub fn train_on_frames(config: &PipelineConfig, frames: &FrameSeries) -> Result<ModelBundle> {
    config.validate()?;
    if frames.side != config.image_side {
        return Err(GhiError::Config(format!(
            "frames were decoded at M={}, config wants M={}",
            frames.side, config.image_side
        )));
    }
    let started = Instant::now();
    let nowcast_set = frames.nowcast();
    if nowcast_set.is_empty() {
        return Err(GhiError::EmptyInput("no decodable training images".into()));
    }
    let nowcast = config
        .regressor
        .fit(&nowcast_set.features, &nowcast_set.targets, config.seed)?;
    drop(nowcast_set);

    let mut horizons = Vec::with_capacity(config.horizons.len());
    let mut horizon_rows = Vec::with_capacity(config.horizons.len());
    for &steps in &config.horizons {
        let label = config.horizon_label(steps);
        let set = frames.lookback(config.lookback, steps, config.cadence());
        if set.is_empty() {
            return Err(GhiError::Config(format!(
                "horizon {label} has no training windows: {}",
                set.note.unwrap_or_default()
            )));
        }
        let seed = horizon_seed(config.seed, steps);
        let lsa_config = config.lsa_config(config.k, seed);
        let (lsa, reduced) = lsa::fit(&set.features, &lsa_config)
            .map_err(|e| GhiError::Config(format!("horizon {label}: {e}")))?;
        log::info!(
            "{label}: {} rows × {} cols reduced to k={} ({} power iterations)",
            set.features.rows,
            set.features.cols,
            config.k,
            lsa.iterations
        );
        let regressor = config.regressor.fit(&reduced, &set.targets, seed)?;
        horizon_rows.push(set.len());
        horizons.push(HorizonModel {
            steps,
            label,
            lsa,
            regressor,
        });
    }

    Ok(ModelBundle {
        config: config.clone(),
        nowcast,
        horizons,
        meta: TrainingMeta {
            train_samples: frames.len() + frames.skipped,
            skipped_images: frames.skipped,
            nowcast_rows: frames.len(),
            horizon_rows,
            first_timestamp: frames.timestamps.first().copied(),
            last_timestamp: frames.timestamps.last().copied(),
            fit_seconds: started.elapsed().as_secs_f64(),
        },
    })
}

/// Model and persistence-baseline reports, nowcast first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub reports: Vec<EvalReport>,
    pub baselines: Vec<EvalReport>,
}

impl Evaluation {
    pub fn report(&self, horizon: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.horizon == horizon)
    }

    pub fn baseline(&self, horizon: &str) -> Option<&EvalReport> {
        self.baselines.iter().find(|r| r.horizon == horizon)
    }

    /// Writes `report.csv`, `report_hourly.csv`, `baseline.csv`, `baseline_hourly.csv`
    /// and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| GhiError::io(dir, e))?;
        let files = [
            ("report.csv", report_csv(&self.reports)),
            ("report_hourly.csv", hourly_csv(&self.reports)),
            ("baseline.csv", report_csv(&self.baselines)),
            ("baseline_hourly.csv", hourly_csv(&self.baselines)),
            (
                "report.json",
                serde_json::to_string_pretty(self).expect("reports serialise") + "\n",
            ),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| GhiError::io(&path, e))?;
        }
        Ok(())
    }
}

pub fn evaluate(bundle: &ModelBundle, test_samples: &[AlignedSample]) -> Result<Evaluation> {
    if test_samples.is_empty() {
        return Err(GhiError::EmptyReport("no test samples".into()));
    }
    let frames = FrameSeries::decode(test_samples, bundle.config.image_side)?;
    evaluate_frames(bundle, &frames)
}

pub fn evaluate_frames(bundle: &ModelBundle, frames: &FrameSeries) -> Result<Evaluation> {
    let config = &bundle.config;
    let offset = config.offset();
    let method = bundle.nowcast.name();
    let mut evaluation = Evaluation {
        reports: Vec::new(),
        baselines: Vec::new(),
    };

    let nowcast_set = frames.nowcast();
    if nowcast_set.is_empty() {
        return Err(GhiError::EmptyReport("no decodable test images".into()));
    }
    let predicted = bundle.nowcast.predict(&nowcast_set.features)?;
    evaluation.reports.push(EvalReport::compute(
        "nowcast",
        method,
        &nowcast_set.target_times,
        &nowcast_set.targets,
        &predicted,
        offset,
    )?);
    drop(nowcast_set);

    for model in &bundle.horizons {
        let set = frames.lookback(config.lookback, model.steps, config.cadence());
        if set.is_empty() {
            return Err(GhiError::EmptyReport(format!(
                "horizon {} has no test windows: {}",
                model.label,
                set.note.unwrap_or_default()
            )));
        }
        let reduced = lsa::transform(&model.lsa, &set.features)?;
        let predicted = model.regressor.predict(&reduced)?;
        evaluation.reports.push(EvalReport::compute(
            &model.label,
            method,
            &set.target_times,
            &set.targets,
            &predicted,
            offset,
        )?);
        evaluation.baselines.push(EvalReport::compute(
            &model.label,
            "persistence",
            &set.target_times,
            &set.targets,
            &set.anchor_ghi,
            offset,
        )?);
    }
    Ok(evaluation)
}

/// Train on the configured split of `samples` and evaluate on the held-out part.
pub fn train_and_evaluate(
    config: &PipelineConfig,
    samples: &[AlignedSample],
) -> Result<(ModelBundle, Evaluation)> {
    let (train_set, test_set) = split(samples, &config.split_policy()?)?;
    let bundle = train(config, &train_set)?;
    let evaluation = evaluate(&bundle, &test_set)?;
    Ok((bundle, evaluation))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonForecast {
    pub horizon: String,
    pub valid_at: String,
    pub ghi_wm2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub anchor: String,
    pub nowcast_wm2: f64,
    pub horizons: Vec<HorizonForecast>,
}

impl Forecast {
    pub fn to_text(&self) -> String {
        let mut out = format!("anchor {}\nnowcast {:.1} W/m2\n", self.anchor, self.nowcast_wm2);
        for h in &self.horizons {
            out.push_str(&format!("{} {} {:.1} W/m2\n", h.horizon, h.valid_at, h.ghi_wm2));
        }
        out
    }
}

/// Predicts every horizon from the most recent `m` frames in `images`.
pub fn forecast_latest(bundle: &ModelBundle, images: &[ImageRecord]) -> Result<Forecast> {
    let config = &bundle.config;
    let m = config.lookback;
    if images.len() < m {
        return Err(GhiError::Config(format!(
            "forecast needs {m} recent frames, found {}",
            images.len()
        )));
    }
    let recent = &images[images.len() - m..];
    let times: Vec<Timestamp> = recent.iter().map(|r| r.timestamp).collect();
    if window_anchors(&times, m, 0, config.cadence()).is_empty() {
        return Err(GhiError::Config(format!(
            "forecast needs {m} consecutive frames at {}-minute cadence ending at {}",
            config.cadence_min,
            format_utc(&times[m - 1])
        )));
    }
    let mut row = Vec::with_capacity(m * config.image_side * config.image_side * 3);
    for record in recent {
        row.extend(decode_and_resize(record, config.image_side)?.values);
    }
    let anchor = times[m - 1];
    let latest = FeatureMatrix::from_vec(
        1,
        config.image_side * config.image_side * 3,
        row[row.len() - config.image_side * config.image_side * 3..].to_vec(),
    )?;
    let nowcast_wm2 = bundle.nowcast.predict(&latest)?[0];
    let window = FeatureMatrix::from_vec(1, row.len(), row)?;
    let mut horizons = Vec::new();
    for model in &bundle.horizons {
        let reduced = lsa::transform(&model.lsa, &window)?;
        let ghi = model.regressor.predict(&reduced)?[0];
        let valid_at = anchor + config.cadence() * model.steps as i32;
        horizons.push(HorizonForecast {
            horizon: model.label.clone(),
            valid_at: format_utc(&valid_at),
            ghi_wm2: ghi,
        });
    }
    Ok(Forecast {
        anchor: format_utc(&anchor),
        nowcast_wm2,
        horizons,
    })
}
