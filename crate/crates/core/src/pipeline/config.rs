//! Pipeline configuration and its flat `key = value` file format.
//!
//! Lines are `key = value`; `#` and `;` start comments and `[section]` headers are accepted
//! for grouping but do not namespace keys. Later assignments win, so command-line
//! overrides are applied after the file.

use std::fs;
use std::path::Path;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::error::{GhiError, Result};
use crate::ingest::{DaylightFilter, FilenamePattern, SplitPolicy, DEFAULT_FILENAME_PATTERN};
use crate::lsa::{LsaConfig, SvdBackend};
use crate::matrix_io::sha256_hex;
use crate::regress::{NeighborSearch, RegressorConfig};
use crate::time::UtcOffset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdSettings {
    pub backend: SvdBackend,
    pub dense_threshold: usize,
    pub oversampling: usize,
    pub power_iters: usize,
    pub max_power_iters: usize,
    pub tolerance: f64,
}

impl Default for SvdSettings {
    fn default() -> Self {
        let d = LsaConfig::default();
        SvdSettings {
            backend: d.backend,
            dense_threshold: d.dense_threshold,
            oversampling: d.oversampling,
            power_iters: d.power_iters,
            max_power_iters: d.max_power_iters,
            tolerance: d.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Downsampled image side `M`.
    pub image_side: usize,
    /// Look-back depth `m` in frames.
    pub lookback: usize,
    /// Truncated-SVD rank.
    pub k: usize,
    pub cadence_min: i64,
    /// Forecast horizons in cadence steps, strictly increasing.
    pub horizons: Vec<usize>,
    pub regressor: RegressorConfig,
    /// Split specification, e.g. `chrono:0.7`, `random:0.7`, `years:2015,2016`.
    pub split: String,
    pub seed: u64,
    pub utc_offset_hours: f64,
    pub align_tolerance_min: i64,
    pub filename_pattern: String,
    pub daylight: DaylightFilter,
    pub svd: SvdSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            image_side: 32,
            lookback: 12,
            k: 20,
            cadence_min: 10,
            horizons: vec![6, 12, 18, 24],
            regressor: RegressorConfig::knn(),
            split: "chrono:0.7".into(),
            seed: 0,
            utc_offset_hours: -7.0,
            align_tolerance_min: 5,
            filename_pattern: DEFAULT_FILENAME_PATTERN.into(),
            daylight: DaylightFilter::default(),
            svd: SvdSettings::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| GhiError::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(GhiError::Config(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

impl PipelineConfig {
    pub fn cadence(&self) -> Duration {
        Duration::minutes(self.cadence_min)
    }

    pub fn offset(&self) -> UtcOffset {
        UtcOffset::from_hours(self.utc_offset_hours)
    }

    pub fn lookback_minutes(&self) -> i64 {
        self.lookback as i64 * self.cadence_min
    }

    pub fn split_policy(&self) -> Result<SplitPolicy> {
        SplitPolicy::parse(&self.split, self.seed)
    }

    pub fn pattern(&self) -> Result<FilenamePattern> {
        FilenamePattern::parse(&self.filename_pattern)
    }

    pub fn lsa_config(&self, k: usize, seed: u64) -> LsaConfig {
        LsaConfig {
            k,
            backend: self.svd.backend,
            dense_threshold: self.svd.dense_threshold,
            oversampling: self.svd.oversampling,
            power_iters: self.svd.power_iters,
            max_power_iters: self.svd.max_power_iters,
            tolerance: self.svd.tolerance,
            seed,
        }
    }

    /// Label for a horizon in cadence steps: `+1h`, `+90min`, or `nowcast` for 0.
    pub fn horizon_label(&self, steps: usize) -> String {
        horizon_label(steps, self.cadence_min)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_side < 2 {
            return Err(GhiError::Config("image_side must be ≥ 2".into()));
        }
        if self.lookback == 0 {
            return Err(GhiError::Config("lookback must be ≥ 1 frame".into()));
        }
        if self.cadence_min <= 0 {
            return Err(GhiError::Config("cadence_min must be positive".into()));
        }
        if self.horizons.is_empty() {
            return Err(GhiError::Config("at least one horizon is required".into()));
        }
        if self.horizons[0] == 0 || self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GhiError::Config(
                "horizons must be positive and strictly increasing".into(),
            ));
        }
        let dim = self.image_side * self.image_side * 3 * self.lookback;
        if self.k == 0 || self.k > dim {
            return Err(GhiError::Config(format!(
                "k={} must lie in [1, M²·3·m = {dim}]",
                self.k
            )));
        }
        if self.align_tolerance_min < 0 {
            return Err(GhiError::Config("align_tolerance_min must be ≥ 0".into()));
        }
        if let RegressorConfig::Knn { k: 0, .. } = self.regressor {
            return Err(GhiError::Config("knn_k must be ≥ 1".into()));
        }
        self.split_policy()?;
        self.pattern()?;
        Ok(())
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serialises"))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| GhiError::io(path, e))?;
        let mut config = PipelineConfig::default();
        config.apply_text(&text)?;
        Ok(config)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw
                .split(['#', ';'])
                .next()
                .unwrap_or("")
                .trim();
            if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| GhiError::Parse {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| GhiError::Config(format!("override `{assignment}` lacks `=`")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "image_side" | "m_side" => self.image_side = parse_num(key, value)?,
            "lookback" => self.lookback = parse_num(key, value)?,
            "lookback_min" => {
                let minutes: i64 = parse_num(key, value)?;
                if minutes <= 0 || minutes % self.cadence_min != 0 {
                    return Err(GhiError::Config(format!(
                        "lookback_min={minutes} is not a positive multiple of the {}-minute cadence",
                        self.cadence_min
                    )));
                }
                self.lookback = (minutes / self.cadence_min) as usize;
            }
            "k" => self.k = parse_num(key, value)?,
            "cadence_min" => self.cadence_min = parse_num(key, value)?,
            "horizons" => self.horizons = parse_horizons(value, self.cadence_min)?,
            "regressor" => {
                self.regressor = match value {
                    "knn" => RegressorConfig::knn(),
                    "rf" => RegressorConfig::rf(),
                    other => {
                        return Err(GhiError::Config(format!(
                            "unknown regressor `{other}` (knn|rf)"
                        )))
                    }
                }
            }
            "knn_k" | "knn_search" => {
                let RegressorConfig::Knn { k, search } = &mut self.regressor else {
                    return Err(GhiError::Config(format!("`{key}` needs regressor = knn")));
                };
                if key == "knn_k" {
                    *k = parse_num(key, value)?;
                } else {
                    *search = match value {
                        "auto" => NeighborSearch::Auto,
                        "brute" => NeighborSearch::Brute,
                        "kdtree" => NeighborSearch::KdTree,
                        other => {
                            return Err(GhiError::Config(format!(
                                "unknown knn_search `{other}` (auto|brute|kdtree)"
                            )))
                        }
                    };
                }
            }
            "rf_trees" | "rf_max_depth" | "rf_min_samples_leaf" | "rf_max_features" => {
                let RegressorConfig::Rf {
                    n_trees,
                    max_depth,
                    min_samples_leaf,
                    max_features,
                } = &mut self.regressor
                else {
                    return Err(GhiError::Config(format!("`{key}` needs regressor = rf")));
                };
                match key {
                    "rf_trees" => *n_trees = parse_num(key, value)?,
                    "rf_max_depth" => *max_depth = parse_num(key, value)?,
                    "rf_min_samples_leaf" => *min_samples_leaf = parse_num(key, value)?,
                    _ => {
                        *max_features = if value == "sqrt" {
                            None
                        } else {
                            Some(parse_num(key, value)?)
                        }
                    }
                }
            }
            "split" => {
                SplitPolicy::parse(value, self.seed)?;
                self.split = value.to_string();
            }
            "seed" => self.seed = parse_num(key, value)?,
            "utc_offset_hours" => self.utc_offset_hours = parse_num(key, value)?,
            "align_tolerance_min" => self.align_tolerance_min = parse_num(key, value)?,
            "filename_pattern" => {
                FilenamePattern::parse(value)?;
                self.filename_pattern = value.to_string();
            }
            "night_filter" => self.daylight.enabled = parse_bool(key, value)?,
            "night_min_ghi" => self.daylight.min_ghi = parse_num(key, value)?,
            "day_first_hour" => self.daylight.first_hour = parse_num(key, value)?,
            "day_last_hour" => self.daylight.last_hour = parse_num(key, value)?,
            "svd_backend" => {
                self.svd.backend = match value {
                    "auto" => SvdBackend::Auto,
                    "dense" => SvdBackend::Dense,
                    "randomized" => SvdBackend::Randomized,
                    other => {
                        return Err(GhiError::Config(format!(
                            "unknown svd_backend `{other}` (auto|dense|randomized)"
                        )))
                    }
                }
            }
            "svd_dense_threshold" => self.svd.dense_threshold = parse_num(key, value)?,
            "svd_oversampling" => self.svd.oversampling = parse_num(key, value)?,
            "svd_power_iters" => self.svd.power_iters = parse_num(key, value)?,
            "svd_max_power_iters" => self.svd.max_power_iters = parse_num(key, value)?,
            "svd_tolerance" => self.svd.tolerance = parse_num(key, value)?,
            other => return Err(GhiError::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Renders the configuration in the file format accepted by [`PipelineConfig::from_file`].
    pub fn to_ini(&self) -> String {
        let mut lines = vec![
            format!("image_side = {}", self.image_side),
            format!("cadence_min = {}", self.cadence_min),
            format!("lookback = {}", self.lookback),
            format!("k = {}", self.k),
            format!(
                "horizons = {}",
                self.horizons
                    .iter()
                    .map(|h| h.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            format!("regressor = {}", self.regressor.name()),
        ];
        match &self.regressor {
            RegressorConfig::Knn { k, search } => {
                lines.push(format!("knn_k = {k}"));
                lines.push(format!(
                    "knn_search = {}",
                    match search {
                        NeighborSearch::Auto => "auto",
                        NeighborSearch::Brute => "brute",
                        NeighborSearch::KdTree => "kdtree",
                    }
                ));
            }
            RegressorConfig::Rf {
                n_trees,
                max_depth,
                min_samples_leaf,
                max_features,
            } => {
                lines.push(format!("rf_trees = {n_trees}"));
                lines.push(format!("rf_max_depth = {max_depth}"));
                lines.push(format!("rf_min_samples_leaf = {min_samples_leaf}"));
                lines.push(format!(
                    "rf_max_features = {}",
                    max_features.map(|m| m.to_string()).unwrap_or_else(|| "sqrt".into())
                ));
            }
        }
        lines.extend([
            format!("seed = {}", self.seed),
            format!("split = {}", self.split),
            format!("utc_offset_hours = {}", self.utc_offset_hours),
            format!("align_tolerance_min = {}", self.align_tolerance_min),
            format!("filename_pattern = {}", self.filename_pattern),
            format!("night_filter = {}", self.daylight.enabled),
            format!("night_min_ghi = {}", self.daylight.min_ghi),
            format!("day_first_hour = {}", self.daylight.first_hour),
            format!("day_last_hour = {}", self.daylight.last_hour),
            format!(
                "svd_backend = {}",
                match self.svd.backend {
                    SvdBackend::Auto => "auto",
                    SvdBackend::Dense => "dense",
                    SvdBackend::Randomized => "randomized",
                }
            ),
            format!("svd_dense_threshold = {}", self.svd.dense_threshold),
            format!("svd_oversampling = {}", self.svd.oversampling),
            format!("svd_power_iters = {}", self.svd.power_iters),
            format!("svd_max_power_iters = {}", self.svd.max_power_iters),
            format!("svd_tolerance = {:e}", self.svd.tolerance),
        ]);
        lines.join("\n") + "\n"
    }
}

pub fn horizon_label(steps: usize, cadence_min: i64) -> String {
    if steps == 0 {
        return "nowcast".into();
    }
    let minutes = steps as i64 * cadence_min;
    if minutes % 60 == 0 {
        format!("+{}h", minutes / 60)
    } else {
        format!("+{minutes}min")
    }
}

/// `6,12` (steps), `1h,2h` or `60min,120min`.
pub fn parse_horizons(value: &str, cadence_min: i64) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let minutes = if let Some(h) = item.strip_suffix('h') {
                Some(parse_num::<i64>("horizons", h)? * 60)
            } else if let Some(m) = item.strip_suffix("min") {
                Some(parse_num::<i64>("horizons", m)?)
            } else {
                None
            };
            match minutes {
                Some(m) if m > 0 && m % cadence_min == 0 => Ok((m / cadence_min) as usize),
                Some(m) => Err(GhiError::Config(format!(
                    "horizon {m} min is not a positive multiple of the {cadence_min}-minute cadence"
                ))),
                None => parse_num("horizons", item),
            }
        })
        .collect()
}
