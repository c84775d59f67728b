//! Timestamp helpers shared by ingestion, windowing and reporting.

use chrono::{DateTime, Duration, FixedOffset, NaiveDateTime, SecondsFormat, Timelike, Utc};

pub type Timestamp = DateTime<Utc>;

/// Parses `YYYY-MM-DDTHH:MM:SSZ` (seconds optional, trailing `Z` optional).
pub fn parse_utc(text: &str) -> Option<Timestamp> {
    let s = text.trim();
    let s = s.strip_suffix('Z').unwrap_or(s);
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(naive.and_utc());
        }
    }
    None
}

pub fn format_utc(ts: &Timestamp) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn truncate_to_minute(ts: Timestamp) -> Timestamp {
    ts.with_second(0)
        .and_then(|t| t.with_nanosecond(0))
        .unwrap_or(ts)
}

/// A fixed UTC offset used to derive local clock hours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtcOffset {
    pub minutes: i32,
}

impl UtcOffset {
    pub const UTC: UtcOffset = UtcOffset { minutes: 0 };

    pub fn from_hours(hours: f64) -> Self {
        UtcOffset {
            minutes: (hours * 60.0).round() as i32,
        }
    }

    pub fn hours(&self) -> f64 {
        self.minutes as f64 / 60.0
    }

    pub fn local_hour(&self, ts: &Timestamp) -> u32 {
        let offset = FixedOffset::east_opt(self.minutes * 60).expect("offset within a day");
        ts.with_timezone(&offset).hour()
    }

    /// Fractional local hour of day in `[0, 24)`.
    pub fn local_hour_f64(&self, ts: &Timestamp) -> f64 {
        let local = *ts + Duration::minutes(self.minutes as i64);
        local.hour() as f64 + local.minute() as f64 / 60.0 + local.second() as f64 / 3600.0
    }
}

pub fn minutes(d: Duration) -> f64 {
    d.num_seconds() as f64 / 60.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn parses_iso_with_zulu() {
        let ts = parse_utc("2016-06-01T12:10:00Z").unwrap();
        assert_eq!(ts, Utc.with_ymd_and_hms(2016, 6, 1, 12, 10, 0).unwrap());
        assert_eq!(format_utc(&ts), "2016-06-01T12:10:00Z");
        assert!(parse_utc("yesterday").is_none());
    }

    #[test]
    fn mountain_standard_hour() {
        let ts = Utc.with_ymd_and_hms(2016, 6, 1, 19, 30, 0).unwrap();
        let mst = UtcOffset::from_hours(-7.0);
        assert_eq!(mst.local_hour(&ts), 12);
        assert!((mst.local_hour_f64(&ts) - 12.5).abs() < 1e-12);
        let early = Utc.with_ymd_and_hms(2016, 6, 1, 3, 0, 0).unwrap();
        assert_eq!(mst.local_hour(&early), 20);
    }
}
