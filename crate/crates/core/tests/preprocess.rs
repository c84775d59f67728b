use std::fs;
use std::path::Path;

use chrono::{Duration, TimeZone, Utc};
use ghicast::ingest::{AlignedSample, ImageRecord};
use ghicast::preprocess::{build_lookback, build_nowcast, decode_and_resize, FrameSeries};
use ghicast::time::Timestamp;
use ghicast::GhiError;
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn at(step: i64) -> Timestamp {
    Utc.with_ymd_and_hms(2016, 6, 1, 15, 0, 0).unwrap() + Duration::minutes(10 * step)
}

fn write_sample(dir: &Path, t: Timestamp, seed: u64) -> AlignedSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = RgbImage::from_fn(40, 30, |_, _| Rgb([rng.gen(), rng.gen(), rng.gen()]));
    let path = dir.join(format!("{}.png", t.format("%Y%m%d%H%M%S")));
    img.save(&path).unwrap();
    AlignedSample {
        timestamp: t,
        image: ImageRecord {
            timestamp: t,
            byte_size: fs::metadata(&path).unwrap().len(),
            path,
        },
        ghi: 100.0 + seed as f64,
    }
}

#[test]
fn gray_frame_at_default_size() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gray.png");
    RgbImage::from_pixel(352, 288, Rgb([128, 128, 128])).save(&path).unwrap();
    let record = ImageRecord { timestamp: at(0), path, byte_size: 0 };
    let v = decode_and_resize(&record, 32).unwrap();
    assert_eq!(v.values.len(), 3072);
    assert!(v.values.iter().all(|&x| (x - 128.0 / 255.0).abs() < 1e-12));
    assert_eq!(v.source_timestamp, at(0));
}

#[test]
fn undecodable_file_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.jpg");
    fs::write(&path, b"not an image").unwrap();
    let record = ImageRecord { timestamp: at(0), path: path.clone(), byte_size: 12 };
    match decode_and_resize(&record, 8) {
        Err(GhiError::Decode { path: p, .. }) => assert_eq!(p, path),
        other => panic!("expected decode error, got {other:?}"),
    }
}

#[test]
fn nowcast_rows_equal_independent_decodes() {
    let dir = tempfile::tempdir().unwrap();
    let samples: Vec<AlignedSample> = (0..5).map(|i| write_sample(dir.path(), at(i), i as u64)).collect();
    let set = build_nowcast(&samples, 8).unwrap();
    assert_eq!((set.features.rows, set.features.cols), (5, 192));
    assert_eq!(set.targets, vec![100.0, 101.0, 102.0, 103.0, 104.0]);
    for (i, s) in samples.iter().enumerate() {
        let v = decode_and_resize(&s.image, 8).unwrap();
        assert_eq!(set.features.row(i), v.values.as_slice());
        assert!(v.values.iter().all(|x| (0.0..=1.0).contains(x)));
    }
}

#[test]
fn nowcast_skips_undecodable() {
    let dir = tempfile::tempdir().unwrap();
    let mut samples: Vec<AlignedSample> = (0..5).map(|i| write_sample(dir.path(), at(i), i as u64)).collect();
    fs::write(&samples[2].image.path, b"garbage").unwrap();
    samples[2].image.byte_size = 7;
    let set = build_nowcast(&samples, 8).unwrap();
    assert_eq!(set.features.rows, 4);
    assert_eq!(set.skipped, 1);
    assert_eq!(set.targets, vec![100.0, 101.0, 103.0, 104.0]);
}

#[test]
fn lookback_concatenates_oldest_first() {
    let dir = tempfile::tempdir().unwrap();
    let samples: Vec<AlignedSample> = (0..20).map(|i| write_sample(dir.path(), at(i), i as u64)).collect();
    let set = build_lookback(&samples, 4, 3, 2, Duration::minutes(10)).unwrap();
    assert_eq!(set.len(), 16);
    assert_eq!(set.features.cols, 4 * 4 * 3 * 3);
    assert_eq!(set.anchor_times.first(), Some(&at(2)));
    assert_eq!(set.anchor_times.last(), Some(&at(17)));
    let frame = |i: usize| decode_and_resize(&samples[i].image, 4).unwrap().values;
    let row0: Vec<f64> = [frame(0), frame(1), frame(2)].concat();
    assert_eq!(set.features.row(0), row0.as_slice());
    assert_eq!(set.targets[0], samples[4].ghi);
    assert_eq!(set.anchor_ghi[0], samples[2].ghi);
    assert!(matches!(
        build_lookback(&samples, 4, 0, 2, Duration::minutes(10)),
        Err(GhiError::Config(_))
    ));
}

#[test]
fn default_forecasting_width() {
    let n = 14;
    let frames = FrameSeries::from_parts(
        32,
        (0..n).map(at).collect(),
        vec![500.0; n as usize],
        vec![vec![0.25; 3072]; n as usize],
    )
    .unwrap();
    let set = frames.lookback(12, 1, Duration::minutes(10));
    assert_eq!(set.features.cols, 36_864);
    assert_eq!(set.len(), 2);
}

fn series_with_gap(n: i64, gap_after: i64, gap_steps: i64) -> FrameSeries {
    let times: Vec<Timestamp> = (0..n)
        .map(|i| at(if i > gap_after { i + gap_steps } else { i }))
        .collect();
    FrameSeries::from_parts(
        1,
        times,
        (0..n).map(|i| i as f64).collect(),
        (0..n).map(|i| vec![i as f64; 3]).collect(),
    )
    .unwrap()
}

#[test]
fn thirty_minute_gap_removes_spanning_windows() {
    let (n, m, h) = (60, 12, 6);
    let frames = series_with_gap(n, 29, 2);
    let set = frames.lookback(m, h, Duration::minutes(10));
    let brute: Vec<Timestamp> = (0..n as usize)
        .filter(|&a| a + 1 >= m && a + h < n as usize)
        .filter(|&a| {
            (a + 1 - m..a + h).all(|i| frames.timestamps[i + 1] - frames.timestamps[i] <= Duration::minutes(15))
        })
        .map(|a| frames.timestamps[a])
        .collect();
    assert_eq!(set.anchor_times, brute);
    assert!(!brute.is_empty());
    for (row, &anchor) in set.anchor_times.iter().enumerate() {
        let a = frames.timestamps.iter().position(|&t| t == anchor).unwrap();
        // the broken gap sits between frames 29 and 30
        assert!(a + h < 30 || a + 1 - m >= 30);
        let first = frames.pixels[a + 1 - m][0];
        assert_eq!(set.features.row(row)[0], first);
        assert_eq!(frames.timestamps[a] - frames.timestamps[a + 1 - m], Duration::minutes(10 * (m as i64 - 1)));
    }
}

#[test]
fn small_jitter_within_tolerance_keeps_windows() {
    let mut times: Vec<Timestamp> = (0..10).map(at).collect();
    times[5] += Duration::minutes(4);
    let frames = FrameSeries::from_parts(1, times, vec![1.0; 10], vec![vec![0.0; 3]; 10]).unwrap();
    assert_eq!(frames.lookback(3, 1, Duration::minutes(10)).len(), 7);
}
