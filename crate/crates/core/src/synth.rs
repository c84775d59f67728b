//! Deterministic synthetic sky-camera dataset.
//!
//! GHI follows `clear_sky(t)·(1 − 0.8·cloud(t)) + noise`, where `clear_sky` is a half-sine
//! between sunrise and sunset peaking at `peak_ghi`, and `cloud(t)` is an AR(1) process
//! clipped to `[0, 1]`. Each frame shows a sky disk whose brightness is
//! `daylight(t)·(1 − cloud(t))` on a dark background, plus a sun marker that moves along
//! an arc with the local hour.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use image::{Rgb, RgbImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GhiError, Result};
use crate::ingest::{write_ghi_csv, GhiReading};
use crate::time::{format_utc, Timestamp, UtcOffset};

pub const ORACLE_CSV_HEADER: &str = "timestamp_utc,ghi_true_wm2";
const CLOUD_ATTENUATION: f64 = 0.8;
const BACKGROUND: [u8; 3] = [12, 12, 20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub days: usize,
    pub cadence_min: i64,
    pub image_side: u32,
    pub start: NaiveDate,
    /// AR(1) coefficient per cadence step.
    pub cloud_correlation: f64,
    pub cloud_mean: f64,
    /// Standard deviation of the AR(1) innovation.
    pub cloud_sd: f64,
    pub noise_sd: f64,
    pub peak_ghi: f64,
    pub sunrise_hour: f64,
    pub sunset_hour: f64,
    pub utc_offset_hours: f64,
    pub sun_marker: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            days: 3,
            cadence_min: 10,
            image_side: 64,
            start: NaiveDate::from_ymd_opt(2016, 6, 1).expect("valid date"),
            cloud_correlation: 0.9,
            cloud_mean: 0.35,
            cloud_sd: 0.12,
            noise_sd: 0.0,
            peak_ghi: 1000.0,
            sunrise_hour: 6.0,
            sunset_hour: 18.0,
            utc_offset_hours: -7.0,
            sun_marker: true,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.days == 0 {
            return Err(GhiError::Config("synthetic dataset needs days ≥ 1".into()));
        }
        if self.noise_sd < 0.0 || !self.noise_sd.is_finite() {
            return Err(GhiError::Config("noise_sd must be ≥ 0".into()));
        }
        if self.cadence_min <= 0 || 1440 % self.cadence_min != 0 {
            return Err(GhiError::Config(
                "cadence must be a positive divisor of 1440 minutes".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.cloud_correlation.abs()) {
            return Err(GhiError::Config("cloud_correlation must lie in (-1, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.cloud_mean) || self.cloud_sd < 0.0 {
            return Err(GhiError::Config("cloud_mean must lie in [0, 1], cloud_sd ≥ 0".into()));
        }
        if self.image_side < 4 {
            return Err(GhiError::Config("image_side must be ≥ 4".into()));
        }
        if self.sunset_hour <= self.sunrise_hour {
            return Err(GhiError::Config("sunset must follow sunrise".into()));
        }
        Ok(())
    }

    pub fn frames_per_day(&self) -> usize {
        (1440 / self.cadence_min) as usize
    }

    fn offset(&self) -> UtcOffset {
        UtcOffset::from_hours(self.utc_offset_hours)
    }

    /// Daylight fraction in `[0, 1]`: the half-sine between sunrise and sunset.
    pub fn daylight(&self, ts: &Timestamp) -> f64 {
        let h = self.offset().local_hour_f64(ts);
        if h <= self.sunrise_hour || h >= self.sunset_hour {
            return 0.0;
        }
        (PI * (h - self.sunrise_hour) / (self.sunset_hour - self.sunrise_hour)).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthFrame {
    pub timestamp: Timestamp,
    pub cloud: f64,
    pub clear_sky: f64,
    /// Noiseless GHI.
    pub ghi_true: f64,
    /// GHI with sensor noise, clamped at 0.
    pub ghi_measured: f64,
}

/// Simulates the cloud process and GHI for every frame.
pub fn simulate(config: &SynthConfig) -> Result<Vec<SynthFrame>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise_sd).map_err(|e| GhiError::Config(e.to_string()))?;
    // Local midnight of the start date, expressed in UTC.
    let start = config
        .start
        .and_hms_opt(0, 0, 0)
        .expect("midnight exists")
        .and_utc()
        - Duration::minutes(config.offset().minutes as i64);
    let n = config.days * config.frames_per_day();
    let mut cloud = config.cloud_mean;
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let timestamp = start + Duration::minutes(config.cadence_min * i as i64);
        let shock: f64 = StandardNormal.sample(&mut rng);
        cloud = (config.cloud_mean
            + config.cloud_correlation * (cloud - config.cloud_mean)
            + config.cloud_sd * shock)
            .clamp(0.0, 1.0);
        let clear_sky = config.peak_ghi * config.daylight(&timestamp);
        let ghi_true = clear_sky * (1.0 - CLOUD_ATTENUATION * cloud);
        let ghi_measured = (ghi_true + noise.sample(&mut rng)).max(0.0);
        frames.push(SynthFrame {
            timestamp,
            cloud,
            clear_sky,
            ghi_true,
            ghi_measured,
        });
    }
    Ok(frames)
}

/// Renders one frame.
pub fn render(frame: &SynthFrame, config: &SynthConfig) -> RgbImage {
    let side = config.image_side;
    let s = side as f64;
    let (cx, cy) = (s / 2.0, s / 2.0);
    let sky_radius = 0.45 * s;
    let daylight = if config.peak_ghi > 0.0 {
        frame.clear_sky / config.peak_ghi
    } else {
        0.0
    };
    let brightness = daylight * (1.0 - frame.cloud);
    let sky = [
        (255.0 * brightness * 0.6).round() as u8,
        (255.0 * brightness * 0.8).round() as u8,
        (255.0 * brightness).round() as u8,
    ];

    // sun travels a half-ellipse from east (left) to west (right)
    let sun = (config.sun_marker && daylight > 0.0).then(|| {
        let h = UtcOffset::from_hours(config.utc_offset_hours).local_hour_f64(&frame.timestamp);
        let theta = PI * (h - config.sunrise_hour) / (config.sunset_hour - config.sunrise_hour);
        let arc = 0.33 * s;
        (cx - arc * theta.cos(), cy - 0.8 * arc * theta.sin())
    });
    let sun_radius = 0.07 * s;
    let sun_value = (255.0 * daylight).round() as u8;

    RgbImage::from_fn(side, side, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        if let Some((sx, sy)) = sun {
            if (px - sx).powi(2) + (py - sy).powi(2) <= sun_radius * sun_radius {
                return Rgb([sun_value, sun_value, sun_value]);
            }
        }
        if (px - cx).powi(2) + (py - cy).powi(2) <= sky_radius * sky_radius {
            Rgb(sky)
        } else {
            Rgb(BACKGROUND)
        }
    })
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub images_dir: PathBuf,
    pub ghi_csv: PathBuf,
    pub oracle_csv: PathBuf,
    pub frames: Vec<SynthFrame>,
}

/// Writes `images/YYYYMMDDHHMMSS.png`, `ghi.csv` and `oracle.csv` under `out_dir`.
pub fn generate(config: &SynthConfig, out_dir: &Path) -> Result<SynthOutput> {
    let frames = simulate(config)?;
    let images_dir = out_dir.join("images");
    fs::create_dir_all(&images_dir).map_err(|e| GhiError::io(&images_dir, e))?;
    for frame in &frames {
        let path = images_dir.join(format!("{}.png", frame.timestamp.format("%Y%m%d%H%M%S")));
        render(frame, config)
            .save(&path)
            .map_err(|e| GhiError::io(&path, std::io::Error::other(e.to_string())))?;
    }

    let ghi_csv = out_dir.join("ghi.csv");
    let readings: Vec<GhiReading> = frames
        .iter()
        .map(|f| GhiReading {
            timestamp: f.timestamp,
            ghi: f.ghi_measured,
        })
        .collect();
    write_ghi_csv(&ghi_csv, &readings)?;

    let oracle_csv = out_dir.join("oracle.csv");
    let mut oracle = format!("{ORACLE_CSV_HEADER}\n");
    for f in &frames {
        oracle.push_str(&format!("{},{}\n", format_utc(&f.timestamp), f.ghi_true));
    }
    fs::write(&oracle_csv, oracle).map_err(|e| GhiError::io(&oracle_csv, e))?;

    Ok(SynthOutput {
        images_dir,
        ghi_csv,
        oracle_csv,
        frames,
    })
}
