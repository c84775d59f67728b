//! Loading and aligning the raw inputs: a directory of timestamped sky images and a
//! GHI measurement series.
//!
//! Images are paired with the nearest GHI reading inside a tolerance window; a reading
//! serves at most one image. The aligned sequence is then split into train and test
//! sets by one of the [`SplitPolicy`] variants.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GhiError, Result};
use crate::time::{parse_utc, truncate_to_minute, Timestamp, UtcOffset};

pub const GHI_CSV_HEADER: [&str; 2] = ["timestamp_utc", "ghi_wm2"];
pub const DEFAULT_FILENAME_PATTERN: &str = "YYYYMMDDHHMMSS";
const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhiReading {
    pub timestamp: Timestamp,
    /// W/m², never negative.
    pub ghi: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GhiSeries {
    pub readings: Vec<GhiReading>,
    /// Rows whose negative GHI was clamped to zero.
    pub clamped: usize,
    /// Rows discarded because a later row carried the same minute.
    pub duplicates: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ImageRecord {
    pub timestamp: Timestamp,
    pub path: PathBuf,
    pub byte_size: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ImageScan {
    pub records: Vec<ImageRecord>,
    /// Files that were not images or did not match the filename pattern.
    pub skipped: usize,
    /// Images dropped because another file carried the same timestamp.
    pub duplicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedSample {
    pub timestamp: Timestamp,
    pub image: ImageRecord,
    pub ghi: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Alignment {
    pub samples: Vec<AlignedSample>,
    /// Images with no free GHI reading inside the tolerance.
    pub dropped: usize,
}

/// Reads a `timestamp_utc,ghi_wm2` CSV.
///
/// Readings come back sorted. Same-minute duplicates keep the row that appears last in
/// the file and negative values are clamped to 0.
pub fn load_ghi_series(path: &Path) -> Result<GhiSeries> {
    let text = fs::read_to_string(path).map_err(|e| GhiError::io(path, e))?;
    parse_ghi_csv(&text)
}

pub fn parse_ghi_csv(text: &str) -> Result<GhiSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader.headers().map_err(|e| GhiError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let ts_col = headers.iter().position(|h| h == GHI_CSV_HEADER[0]);
    let ghi_col = headers.iter().position(|h| h == GHI_CSV_HEADER[1]);
    let (ts_col, ghi_col) = match (ts_col, ghi_col) {
        (Some(t), Some(g)) => (t, g),
        _ => {
            return Err(GhiError::Parse {
                line: 1,
                message: format!("expected header `{}`", GHI_CSV_HEADER.join(",")),
            })
        }
    };

    // (timestamp, file order, value)
    let mut rows: Vec<(Timestamp, usize, f64)> = Vec::new();
    let mut clamped = 0;
    for (idx, record) in reader.records().enumerate() {
        let line = record
            .as_ref()
            .ok()
            .and_then(|r| r.position())
            .map(|p| p.line() as usize)
            .unwrap_or(idx + 2);
        let record = record.map_err(|e| GhiError::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let ts_field = record.get(ts_col).unwrap_or("");
        let ghi_field = record.get(ghi_col).unwrap_or("");
        let ts = parse_utc(ts_field).ok_or_else(|| GhiError::Parse {
            line,
            message: format!("bad timestamp `{ts_field}`"),
        })?;
        let mut ghi: f64 = ghi_field.parse().map_err(|_| GhiError::Parse {
            line,
            message: format!("bad GHI value `{ghi_field}`"),
        })?;
        if !ghi.is_finite() {
            return Err(GhiError::Parse {
                line,
                message: format!("non-finite GHI value `{ghi_field}`"),
            });
        }
        if ghi < 0.0 {
            ghi = 0.0;
            clamped += 1;
        }
        rows.push((truncate_to_minute(ts), idx, ghi));
    }

    if rows.is_empty() {
        return Err(GhiError::EmptyInput("GHI file has no data rows".into()));
    }
    if clamped > 0 {
        log::warn!("clamped {clamped} negative GHI readings to 0");
    }

    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut readings: Vec<GhiReading> = Vec::with_capacity(rows.len());
    let mut duplicates = 0;
    for (timestamp, _, ghi) in rows {
        match readings.last_mut() {
            Some(last) if last.timestamp == timestamp => {
                *last = GhiReading { timestamp, ghi };
                duplicates += 1;
            }
            _ => readings.push(GhiReading { timestamp, ghi }),
        }
    }

    Ok(GhiSeries {
        readings,
        clamped,
        duplicates,
    })
}

pub fn write_ghi_csv(path: &Path, readings: &[GhiReading]) -> Result<()> {
    let mut out = String::from("timestamp_utc,ghi_wm2\n");
    for r in readings {
        out.push_str(&format!("{},{}\n", crate::time::format_utc(&r.timestamp), r.ghi));
    }
    fs::write(path, out).map_err(|e| GhiError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PatternToken {
    Year,
    Month,
    Day,
    Hour,
    Minute,
    Second,
    Literal(char),
    AnySuffix,
}

/// Filename timestamp template, matched against the file stem.
///
/// Tokens: `YYYY`, `MM` (month; minutes once `HH` has been seen), `DD`, `HH`, `SS`, and a
/// trailing `*` that swallows any remainder. Every other character is a literal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilenamePattern {
    tokens: Vec<PatternToken>,
    source: String,
}

impl FilenamePattern {
    pub fn parse(pattern: &str) -> Result<Self> {
        let chars: Vec<char> = pattern.chars().collect();
        let mut tokens = Vec::new();
        let mut seen_hour = false;
        let mut i = 0;
        while i < chars.len() {
            let rest: String = chars[i..].iter().collect();
            if rest.starts_with("YYYY") {
                tokens.push(PatternToken::Year);
                i += 4;
            } else if rest.starts_with("MM") {
                tokens.push(if seen_hour {
                    PatternToken::Minute
                } else {
                    PatternToken::Month
                });
                i += 2;
            } else if rest.starts_with("DD") {
                tokens.push(PatternToken::Day);
                i += 2;
            } else if rest.starts_with("HH") {
                seen_hour = true;
                tokens.push(PatternToken::Hour);
                i += 2;
            } else if rest.starts_with("SS") {
                tokens.push(PatternToken::Second);
                i += 2;
            } else if chars[i] == '*' {
                if i + 1 != chars.len() {
                    return Err(GhiError::Config(
                        "`*` is only allowed at the end of a filename pattern".into(),
                    ));
                }
                tokens.push(PatternToken::AnySuffix);
                i += 1;
            } else {
                tokens.push(PatternToken::Literal(chars[i]));
                i += 1;
            }
        }
        for (needed, name) in [
            (PatternToken::Year, "YYYY"),
            (PatternToken::Month, "MM (month)"),
            (PatternToken::Day, "DD"),
            (PatternToken::Hour, "HH"),
            (PatternToken::Minute, "MM (minute)"),
        ] {
            if !tokens.contains(&needed) {
                return Err(GhiError::Config(format!(
                    "filename pattern `{pattern}` lacks {name}"
                )));
            }
        }
        Ok(FilenamePattern {
            tokens,
            source: pattern.to_string(),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    /// Extracts the timestamp from a file stem, or `None` if it does not match.
    pub fn match_stem(&self, stem: &str) -> Option<Timestamp> {
        let bytes = stem.as_bytes();
        let mut pos = 0;
        let (mut y, mut mo, mut d, mut h, mut mi, mut s) = (0i32, 0u32, 0u32, 0u32, 0u32, 0u32);
        let digits = |pos: usize, n: usize| -> Option<u32> {
            let slice = bytes.get(pos..pos + n)?;
            if !slice.iter().all(u8::is_ascii_digit) {
                return None;
            }
            std::str::from_utf8(slice).ok()?.parse().ok()
        };
        for token in &self.tokens {
            match *token {
                PatternToken::Year => {
                    y = digits(pos, 4)? as i32;
                    pos += 4;
                }
                PatternToken::Month => {
                    mo = digits(pos, 2)?;
                    pos += 2;
                }
                PatternToken::Day => {
                    d = digits(pos, 2)?;
                    pos += 2;
                }
                PatternToken::Hour => {
                    h = digits(pos, 2)?;
                    pos += 2;
                }
                PatternToken::Minute => {
                    mi = digits(pos, 2)?;
                    pos += 2;
                }
                PatternToken::Second => {
                    s = digits(pos, 2)?;
                    pos += 2;
                }
                PatternToken::Literal(c) => {
                    let mut buf = [0u8; 4];
                    let lit = c.encode_utf8(&mut buf).as_bytes();
                    if bytes.get(pos..pos + lit.len())? != lit {
                        return None;
                    }
                    pos += lit.len();
                }
                PatternToken::AnySuffix => pos = bytes.len(),
            }
        }
        if pos != bytes.len() {
            return None;
        }
        let date = NaiveDate::from_ymd_opt(y, mo, d)?;
        let time = NaiveTime::from_hms_opt(h, mi, s)?;
        Some(NaiveDateTime::new(date, time).and_utc())
    }
}

impl Default for FilenamePattern {
    fn default() -> Self {
        FilenamePattern::parse(DEFAULT_FILENAME_PATTERN).expect("default pattern is valid")
    }
}

/// Recursively collects image files under `root` whose stem matches `pattern`.
pub fn scan_image_directory(root: &Path, pattern: &FilenamePattern) -> Result<ImageScan> {
    let mut files = Vec::new();
    collect_files(root, &mut files)?;
    files.sort();

    let mut scan = ImageScan::default();
    let mut records = Vec::new();
    for path in files {
        let ext_ok = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false);
        let ts = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| pattern.match_stem(s));
        match (ext_ok, ts) {
            (true, Some(timestamp)) => {
                let byte_size = fs::metadata(&path)
                    .map_err(|e| GhiError::io(&path, e))?
                    .len();
                records.push(ImageRecord {
                    timestamp,
                    path,
                    byte_size,
                });
            }
            _ => scan.skipped += 1,
        }
    }

    records.sort();
    for record in records {
        match scan.records.last() {
            Some(last) if last.timestamp == record.timestamp => scan.duplicates += 1,
            _ => scan.records.push(record),
        }
    }

    if scan.records.is_empty() {
        return Err(GhiError::EmptyInput(format!(
            "no files under {} match pattern `{}`",
            root.display(),
            pattern.as_str()
        )));
    }
    Ok(scan)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| GhiError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| GhiError::io(dir, e))?;
        let path = entry.path();
        let kind = entry.file_type().map_err(|e| GhiError::io(&path, e))?;
        if kind.is_dir() {
            collect_files(&path, out)?;
        } else if kind.is_file() {
            out.push(path);
        }
    }
    Ok(())
}

/// Pairs each image with the nearest unused reading within `tolerance`.
///
/// Candidate pairs are accepted greedily in order of increasing time offset; equal offsets
/// favour the earlier reading. Both inputs must be sorted ascending.
pub fn align(images: &[ImageRecord], ghi: &[GhiReading], tolerance: Duration) -> Alignment {
    let tol = tolerance.num_seconds().abs();
    let mut candidates: Vec<(i64, usize, usize)> = Vec::new();
    let mut lo = 0;
    for (i, image) in images.iter().enumerate() {
        let t = image.timestamp.timestamp();
        while lo < ghi.len() && ghi[lo].timestamp.timestamp() < t - tol {
            lo += 1;
        }
        let mut j = lo;
        while j < ghi.len() && ghi[j].timestamp.timestamp() <= t + tol {
            let gap = (ghi[j].timestamp.timestamp() - t).abs();
            candidates.push((gap, j, i));
            j += 1;
        }
    }
    candidates.sort_unstable();

    let mut image_match: Vec<Option<usize>> = vec![None; images.len()];
    let mut reading_used = vec![false; ghi.len()];
    for (_, j, i) in candidates {
        if image_match[i].is_none() && !reading_used[j] {
            image_match[i] = Some(j);
            reading_used[j] = true;
        }
    }

    let mut alignment = Alignment::default();
    for (image, matched) in images.iter().zip(image_match) {
        match matched {
            Some(j) => alignment.samples.push(AlignedSample {
                timestamp: image.timestamp,
                image: image.clone(),
                ghi: ghi[j].ghi,
            }),
            None => alignment.dropped += 1,
        }
    }
    alignment
}

/// Night-time exclusion: a sample is dropped when its GHI is below `min_ghi` *and* its
/// local hour lies outside `[first_hour, last_hour]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaylightFilter {
    pub enabled: bool,
    pub min_ghi: f64,
    pub first_hour: u32,
    pub last_hour: u32,
}

impl Default for DaylightFilter {
    fn default() -> Self {
        DaylightFilter {
            enabled: true,
            min_ghi: 5.0,
            first_hour: 4,
            last_hour: 22,
        }
    }
}

impl DaylightFilter {
    pub fn keeps(&self, sample: &AlignedSample, offset: UtcOffset) -> bool {
        if !self.enabled {
            return true;
        }
        let hour = offset.local_hour(&sample.timestamp);
        let daytime = hour >= self.first_hour && hour <= self.last_hour;
        daytime || sample.ghi >= self.min_ghi
    }

    pub fn apply(&self, samples: Vec<AlignedSample>, offset: UtcOffset) -> (Vec<AlignedSample>, usize) {
        let before = samples.len();
        let kept: Vec<_> = samples.into_iter().filter(|s| self.keeps(s, offset)).collect();
        let removed = before - kept.len();
        (kept, removed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SplitPolicy {
    /// Earliest `fraction` of the samples go to training.
    ChronologicalPrefix { fraction: f64 },
    /// A seeded random `fraction` of the samples go to training.
    RandomByFraction { fraction: f64, seed: u64 },
    /// Samples from the listed calendar years (UTC) form the test set.
    ByYear { test_years: Vec<i32> },
    /// `count` distinct calendar years, drawn with `seed`, form the test set.
    RandomYears { count: usize, seed: u64 },
}

impl Default for SplitPolicy {
    fn default() -> Self {
        SplitPolicy::ChronologicalPrefix { fraction: 0.7 }
    }
}

impl SplitPolicy {
    /// Parses `chrono:0.7`, `random:0.7`, `years:2015,2016` or `random-years:2`.
    pub fn parse(text: &str, seed: u64) -> Result<Self> {
        let (kind, param) = text.split_once(':').unwrap_or((text, ""));
        let fraction = |p: &str| -> Result<f64> {
            if p.is_empty() {
                return Ok(0.7);
            }
            p.trim()
                .parse()
                .map_err(|_| GhiError::Config(format!("bad split fraction `{p}`")))
        };
        let policy = match kind.trim() {
            "chrono" | "chronological" | "chronological-prefix" => {
                SplitPolicy::ChronologicalPrefix {
                    fraction: fraction(param)?,
                }
            }
            "random" | "random-by-fraction" => SplitPolicy::RandomByFraction {
                fraction: fraction(param)?,
                seed,
            },
            "years" | "by-year" | "random-by-year" => {
                let test_years = param
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|_| GhiError::Config(format!("bad year `{s}`")))
                    })
                    .collect::<Result<Vec<i32>>>()?;
                SplitPolicy::ByYear { test_years }
            }
            "random-years" => SplitPolicy::RandomYears {
                count: param
                    .trim()
                    .parse()
                    .map_err(|_| GhiError::Config(format!("bad year count `{param}`")))?,
                seed,
            },
            other => return Err(GhiError::Config(format!("unknown split policy `{other}`"))),
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SplitPolicy::ChronologicalPrefix { fraction }
            | SplitPolicy::RandomByFraction { fraction, .. } => {
                if !(*fraction > 0.0 && *fraction < 1.0) {
                    return Err(GhiError::Config(format!(
                        "split fraction {fraction} outside (0, 1)"
                    )));
                }
            }
            SplitPolicy::ByYear { test_years } if test_years.is_empty() => {
                return Err(GhiError::Config("year split needs at least one test year".into()))
            }
            SplitPolicy::RandomYears { count: 0, .. } => {
                return Err(GhiError::Config("random-years split needs count ≥ 1".into()))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        match self {
            SplitPolicy::ChronologicalPrefix { fraction } => format!("chrono:{fraction}"),
            SplitPolicy::RandomByFraction { fraction, .. } => format!("random:{fraction}"),
            SplitPolicy::ByYear { test_years } => format!(
                "years:{}",
                test_years
                    .iter()
                    .map(|y| y.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            SplitPolicy::RandomYears { count, .. } => format!("random-years:{count}"),
        }
    }
}

/// Partitions `samples` into (train, test); both halves keep chronological order.
pub fn split(
    samples: &[AlignedSample],
    policy: &SplitPolicy,
) -> Result<(Vec<AlignedSample>, Vec<AlignedSample>)> {
    policy.validate()?;
    let n = samples.len();
    if n < 2 {
        return Err(GhiError::Config(format!(
            "need at least 2 samples to split, got {n}"
        )));
    }
    let train_count = |fraction: f64| ((fraction * n as f64).round() as usize).clamp(1, n - 1);

    let is_test: Vec<bool> = match policy {
        SplitPolicy::ChronologicalPrefix { fraction } => {
            let cut = train_count(*fraction);
            (0..n).map(|i| i >= cut).collect()
        }
        SplitPolicy::RandomByFraction { fraction, seed } => {
            let cut = train_count(*fraction);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            let mut flags = vec![false; n];
            for &i in &order[cut..] {
                flags[i] = true;
            }
            flags
        }
        SplitPolicy::ByYear { test_years } => {
            let years: BTreeSet<i32> = test_years.iter().copied().collect();
            samples
                .iter()
                .map(|s| years.contains(&s.timestamp.year()))
                .collect()
        }
        SplitPolicy::RandomYears { count, seed } => {
            let available: Vec<i32> = samples
                .iter()
                .map(|s| s.timestamp.year())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if *count >= available.len() {
                return Err(GhiError::Config(format!(
                    "cannot hold out {count} of {} available years",
                    available.len()
                )));
            }
            let chosen: BTreeSet<i32> = available
                .choose_multiple(&mut ChaCha8Rng::seed_from_u64(*seed), *count)
                .copied()
                .collect();
            samples
                .iter()
                .map(|s| chosen.contains(&s.timestamp.year()))
                .collect()
        }
    };

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (sample, test_flag) in samples.iter().zip(is_test) {
        if test_flag {
            test.push(sample.clone());
        } else {
            train.push(sample.clone());
        }
    }
    if test.is_empty() {
        return Err(GhiError::Config(format!(
            "split `{}` selects no test samples",
            policy.describe()
        )));
    }
    if train.is_empty() {
        return Err(GhiError::Config(format!(
            "split `{}` selects no training samples",
            policy.describe()
        )));
    }
    Ok((train, test))
}

/// Number of consecutive-sample gaps larger than `max_gap`.
pub fn count_gaps(samples: &[AlignedSample], max_gap: Duration) -> usize {
    samples
        .windows(2)
        .filter(|w| w[1].timestamp - w[0].timestamp > max_gap)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn ts(h: u32, m: u32) -> Timestamp {
        Utc.with_ymd_and_hms(2016, 6, 1, h, m, 0).unwrap()
    }

    fn image(t: Timestamp) -> ImageRecord {
        ImageRecord {
            timestamp: t,
            path: PathBuf::from(format!("{}.jpg", t.format("%Y%m%d%H%M%S"))),
            byte_size: 0,
        }
    }

    fn reading(t: Timestamp, ghi: f64) -> GhiReading {
        GhiReading { timestamp: t, ghi }
    }

    #[test]
    fn csv_two_rows_in_order() {
        let s = parse_ghi_csv(
            "timestamp_utc,ghi_wm2\n2016-06-01T12:10:00Z,820\n2016-06-01T12:00:00Z,800\n",
        )
        .unwrap();
        assert_eq!(s.readings, vec![reading(ts(12, 0), 800.0), reading(ts(12, 10), 820.0)]);
    }

    #[test]
    fn csv_negative_clamped() {
        let s = parse_ghi_csv("timestamp_utc,ghi_wm2\n2016-06-01T12:00:00Z,-3.2\n").unwrap();
        assert_eq!(s.readings[0].ghi, 0.0);
        assert_eq!(s.clamped, 1);
    }

    #[test]
    fn csv_duplicate_keeps_last() {
        let s = parse_ghi_csv(
            "timestamp_utc,ghi_wm2\n\
             2016-06-01T12:00:00Z,700\n\
             2016-06-01T12:10:00Z,500\n\
             2016-06-01T12:00:00Z,710\n",
        )
        .unwrap();
        assert_eq!(s.readings, vec![reading(ts(12, 0), 710.0), reading(ts(12, 10), 500.0)]);
        assert_eq!(s.duplicates, 1);
    }

    #[test]
    fn csv_errors() {
        let err = parse_ghi_csv("timestamp_utc,ghi_wm2\n2016-06-01T12:00:00Z,1\nbad,2\n").unwrap_err();
        assert!(matches!(err, GhiError::Parse { line: 3, .. }), "{err}");
        let err = parse_ghi_csv("timestamp_utc,ghi_wm2\n2016-06-01T12:00:00Z,abc\n").unwrap_err();
        assert!(matches!(err, GhiError::Parse { line: 2, .. }));
        assert!(matches!(
            parse_ghi_csv("timestamp_utc,ghi_wm2\n").unwrap_err(),
            GhiError::EmptyInput(_)
        ));
        assert!(matches!(
            load_ghi_series(Path::new("/nonexistent/ghi.csv")).unwrap_err(),
            GhiError::Io { .. }
        ));
    }

    #[test]
    fn pattern_matching() {
        let p = FilenamePattern::default();
        assert_eq!(p.match_stem("20160601120000"), Some(ts(12, 0)));
        assert_eq!(p.match_stem("2016060112000"), None);
        assert_eq!(p.match_stem("20161301120000"), None);
        let asi = FilenamePattern::parse("YYYYMMDD_HHMMSS_*").unwrap();
        assert_eq!(asi.match_stem("20160601_121000_11"), Some(ts(12, 10)));
        assert!(FilenamePattern::parse("YYYYMMDD").is_err());
        assert!(FilenamePattern::parse("YYYY*MMDDHHMM").is_err());
    }

    #[test]
    fn align_exact_match() {
        let a = align(
            &[image(ts(12, 0))],
            &[reading(ts(12, 0), 800.0), reading(ts(12, 10), 820.0)],
            Duration::minutes(5),
        );
        assert_eq!(a.samples.len(), 1);
        assert_eq!(a.samples[0].ghi, 800.0);
    }

    #[test]
    fn align_outside_tolerance_dropped() {
        let a = align(
            &[image(ts(12, 4))],
            &[reading(ts(11, 58) - Duration::minutes(10), 1.0), reading(ts(12, 10), 820.0)],
            Duration::minutes(5),
        );
        assert!(a.samples.is_empty());
        assert_eq!(a.dropped, 1);
    }

    #[test]
    fn align_tie_prefers_earlier_reading() {
        let a = align(
            &[image(ts(12, 5))],
            &[reading(ts(12, 0), 1.0), reading(ts(12, 10), 2.0)],
            Duration::minutes(5),
        );
        assert_eq!(a.samples[0].ghi, 1.0);
    }

    #[test]
    fn align_reading_used_once() {
        let a = align(
            &[image(ts(12, 1)), image(ts(12, 2))],
            &[reading(ts(12, 0), 1.0)],
            Duration::minutes(5),
        );
        assert_eq!(a.samples.len(), 1);
        assert_eq!(a.samples[0].timestamp, ts(12, 1));
        assert_eq!(a.dropped, 1);
    }

    fn samples(n: usize) -> Vec<AlignedSample> {
        (0..n)
            .map(|i| {
                let t = ts(6, 0) + Duration::minutes(10 * i as i64);
                AlignedSample {
                    timestamp: t,
                    image: image(t),
                    ghi: i as f64,
                }
            })
            .collect()
    }

    #[test]
    fn chronological_prefix() {
        let s = samples(10);
        let (train, test) =
            split(&s, &SplitPolicy::ChronologicalPrefix { fraction: 0.7 }).unwrap();
        assert_eq!(train, s[..7].to_vec());
        assert_eq!(test, s[7..].to_vec());
    }

    #[test]
    fn random_split_deterministic() {
        let s = samples(50);
        let p = SplitPolicy::RandomByFraction {
            fraction: 0.7,
            seed: 42,
        };
        let a = split(&s, &p).unwrap();
        let b = split(&s, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.len(), 35);
        assert_ne!(a.0, s[..35].to_vec());
    }

    #[test]
    fn split_config_errors() {
        let s = samples(10);
        for f in [0.0, 1.0, -0.1, 1.5] {
            assert!(matches!(
                split(&s, &SplitPolicy::ChronologicalPrefix { fraction: f }),
                Err(GhiError::Config(_))
            ));
        }
        assert!(matches!(
            split(&s, &SplitPolicy::ByYear { test_years: vec![1999] }),
            Err(GhiError::Config(_))
        ));
        assert!(matches!(
            split(&s[..1], &SplitPolicy::default()),
            Err(GhiError::Config(_))
        ));
    }

    #[test]
    fn parse_policies() {
        assert_eq!(
            SplitPolicy::parse("years:2015,2016", 1).unwrap(),
            SplitPolicy::ByYear {
                test_years: vec![2015, 2016]
            }
        );
        assert_eq!(
            SplitPolicy::parse("random", 9).unwrap(),
            SplitPolicy::RandomByFraction {
                fraction: 0.7,
                seed: 9
            }
        );
        assert!(SplitPolicy::parse("random:2", 9).is_err());
        assert!(SplitPolicy::parse("bogus", 9).is_err());
    }

    #[test]
    fn daylight_filter() {
        let f = DaylightFilter::default();
        let utc = UtcOffset::UTC;
        let mut s = samples(1)[0].clone();
        s.timestamp = ts(23, 0);
        s.ghi = 0.0;
        assert!(!f.keeps(&s, utc));
        s.ghi = 10.0;
        assert!(f.keeps(&s, utc));
        s.timestamp = ts(12, 0);
        s.ghi = 0.0;
        assert!(f.keeps(&s, utc));
    }
}
