//! Forecast error metrics and report formatting.
//!
//! nMAPE is aggregate-normalised: `100·Σ|y−ŷ| / Σy`. nRMSE divides the RMSE by the range of
//! the true targets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{GhiError, Result};
use crate::time::{Timestamp, UtcOffset};

pub const REPORT_CSV_HEADER: &str = "horizon,nmape_pct,rmse_wm2,nrmse_pct,n";
pub const HOURLY_CSV_HEADER: &str = "horizon,hour,nmape_pct,n";

fn check_lengths(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(GhiError::Shape(format!(
            "{} targets but {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(GhiError::UndefinedMetric("no samples".into()));
    }
    Ok(())
}

pub fn nmape(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    let total: f64 = y.iter().sum();
    if total <= 0.0 {
        return Err(GhiError::UndefinedMetric(
            "nMAPE needs a positive sum of true values".into(),
        ));
    }
    let abs_err: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum();
    Ok(100.0 * abs_err / total)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    let sq: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq / y.len() as f64).sqrt())
}

pub fn nrmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    let r = rmse(y, y_hat)?;
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi <= lo {
        return Err(GhiError::UndefinedMetric(
            "nRMSE needs a non-zero range of true values".into(),
        ));
    }
    Ok(100.0 * r / (hi - lo))
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    let s: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / y.len() as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HourlyBreakdown {
    pub nmape_pct: BTreeMap<u32, f64>,
    pub counts: BTreeMap<u32, usize>,
    /// Hours whose true values sum to zero.
    pub omitted: Vec<u32>,
}

/// nMAPE per local clock hour of the timestamps.
pub fn hourly_breakdown(
    timestamps: &[Timestamp],
    y: &[f64],
    y_hat: &[f64],
    offset: UtcOffset,
) -> Result<HourlyBreakdown> {
    check_lengths(y, y_hat)?;
    if timestamps.len() != y.len() {
        return Err(GhiError::Shape(format!(
            "{} timestamps but {} targets",
            timestamps.len(),
            y.len()
        )));
    }
    let mut buckets: BTreeMap<u32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((t, &a), &b) in timestamps.iter().zip(y).zip(y_hat) {
        let e = buckets.entry(offset.local_hour(t)).or_default();
        e.0.push(a);
        e.1.push(b);
    }
    let mut out = HourlyBreakdown::default();
    for (hour, (ys, ps)) in buckets {
        match nmape(&ys, &ps) {
            Ok(v) => {
                out.nmape_pct.insert(hour, v);
                out.counts.insert(hour, ys.len());
            }
            Err(_) => out.omitted.push(hour),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `nowcast`, `+1h`, … .
    pub horizon: String,
    /// Regressor name or `persistence`.
    pub method: String,
    pub nmape_pct: f64,
    pub rmse_wm2: f64,
    /// Absent when the true targets are constant.
    pub nrmse_pct: Option<f64>,
    pub n_samples: usize,
    pub per_hour: HourlyBreakdown,
}

impl EvalReport {
    pub fn compute(
        horizon: &str,
        method: &str,
        timestamps: &[Timestamp],
        y: &[f64],
        y_hat: &[f64],
        offset: UtcOffset,
    ) -> Result<Self> {
        Ok(EvalReport {
            horizon: horizon.to_string(),
            method: method.to_string(),
            nmape_pct: nmape(y, y_hat)?,
            rmse_wm2: rmse(y, y_hat)?,
            nrmse_pct: nrmse(y, y_hat).ok(),
            n_samples: y.len(),
            per_hour: hourly_breakdown(timestamps, y, y_hat, offset)?,
        })
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

pub fn report_csv(reports: &[EvalReport]) -> String {
    let mut out = format!("{REPORT_CSV_HEADER}\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.horizon,
            fmt(r.nmape_pct),
            fmt(r.rmse_wm2),
            r.nrmse_pct.map(fmt).unwrap_or_default(),
            r.n_samples
        ));
    }
    out
}

pub fn hourly_csv(reports: &[EvalReport]) -> String {
    let mut out = format!("{HOURLY_CSV_HEADER}\n");
    for r in reports {
        for (hour, v) in &r.per_hour.nmape_pct {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.horizon,
                hour,
                fmt(*v),
                r.per_hour.counts[hour]
            ));
        }
    }
    out
}
