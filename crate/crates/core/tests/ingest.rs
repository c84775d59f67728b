use std::fs;
use std::path::PathBuf;

use chrono::{Datelike, Duration, TimeZone, Utc};
use ghicast::ingest::{
    align, load_ghi_series, scan_image_directory, split, AlignedSample, FilenamePattern,
    GhiReading, ImageRecord, SplitPolicy,
};
use ghicast::time::Timestamp;
use ghicast::GhiError;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn at(minutes: i64) -> Timestamp {
    Utc.with_ymd_and_hms(2016, 6, 1, 12, 0, 0).unwrap() + Duration::minutes(minutes)
}

fn image(t: Timestamp) -> ImageRecord {
    ImageRecord {
        timestamp: t,
        path: PathBuf::from(format!("{}.png", t.format("%Y%m%d%H%M%S"))),
        byte_size: 0,
    }
}

fn sample(t: Timestamp, ghi: f64) -> AlignedSample {
    AlignedSample {
        timestamp: t,
        image: image(t),
        ghi,
    }
}

#[test]
fn scan_orders_and_skips() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("20160601121000.jpg"), b"x").unwrap();
    fs::write(dir.path().join("20160601120000.jpg"), b"xy").unwrap();
    fs::write(dir.path().join("README.txt"), b"notes").unwrap();
    let scan = scan_image_directory(dir.path(), &FilenamePattern::default()).unwrap();
    assert_eq!(scan.records.len(), 2);
    assert_eq!(scan.skipped, 1);
    assert_eq!(scan.records[0].timestamp, at(0));
    assert_eq!(scan.records[1].timestamp, at(10));
    assert_eq!(scan.records[0].byte_size, 2);
}

#[test]
fn scan_of_shuffled_files_is_sorted() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut times: Vec<Timestamp> = (0..100).map(|_| at(rng.gen_range(0..100_000))).collect();
    times.sort();
    times.dedup();
    let mut order = times.clone();
    order.shuffle(&mut rng);
    for (i, t) in order.iter().enumerate() {
        let sub = dir.path().join(format!("d{}", i % 3));
        fs::create_dir_all(&sub).unwrap();
        fs::write(sub.join(format!("{}.jpg", t.format("%Y%m%d%H%M%S"))), b"").unwrap();
    }
    let scan = scan_image_directory(dir.path(), &FilenamePattern::default()).unwrap();
    let got: Vec<Timestamp> = scan.records.iter().map(|r| r.timestamp).collect();
    assert_eq!(got, times);
    assert!(got.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn scan_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = scan_image_directory(&dir.path().join("nope"), &FilenamePattern::default());
    assert!(matches!(missing, Err(GhiError::Io { .. })));
    fs::write(dir.path().join("camera.jpg"), b"").unwrap();
    let none = scan_image_directory(dir.path(), &FilenamePattern::default());
    assert!(matches!(none, Err(GhiError::EmptyInput(_))));
}

#[test]
fn custom_pattern_with_suffix() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("2016_06_01__1200_cam3.jpg"), b"").unwrap();
    let pattern = FilenamePattern::parse("YYYY_MM_DD__HHMM*").unwrap();
    let scan = scan_image_directory(dir.path(), &pattern).unwrap();
    assert_eq!(scan.records[0].timestamp, at(0));
}

#[test]
fn missing_csv_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_ghi_series(&dir.path().join("ghi.csv")),
        Err(GhiError::Io { .. })
    ));
}

/// Greedy rule evaluated by exhaustive search: repeatedly take the globally closest free
/// pair, ties to the earlier reading then the earlier image.
fn brute_align(images: &[ImageRecord], ghi: &[GhiReading], tol: i64) -> Vec<(usize, usize)> {
    let mut free_img = vec![true; images.len()];
    let mut free_rd = vec![true; ghi.len()];
    let mut pairs = Vec::new();
    loop {
        let mut best: Option<(i64, usize, usize)> = None;
        for (i, im) in images.iter().enumerate() {
            for (j, rd) in ghi.iter().enumerate() {
                let gap = (im.timestamp - rd.timestamp).num_seconds().abs();
                if free_img[i] && free_rd[j] && gap <= tol {
                    let key = (gap, j, i);
                    if best.is_none_or(|b| key < b) {
                        best = Some(key);
                    }
                }
            }
        }
        match best {
            Some((_, j, i)) => {
                free_img[i] = false;
                free_rd[j] = false;
                pairs.push((i, j));
            }
            None => break,
        }
    }
    pairs.sort();
    pairs
}

fn check_against_brute(images: &[ImageRecord], ghi: &[GhiReading], tol_min: i64) {
    let got = align(images, ghi, Duration::minutes(tol_min));
    let expected = brute_align(images, ghi, tol_min * 60);
    assert_eq!(got.samples.len(), expected.len());
    assert_eq!(got.dropped, images.len() - expected.len());
    for (s, &(i, j)) in got.samples.iter().zip(&expected) {
        assert_eq!(s.image, images[i]);
        assert_eq!(s.ghi, ghi[j].ghi);
    }
    assert!(got.samples.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
}

#[test]
fn align_twenty_with_three_missing_readings() {
    let images: Vec<ImageRecord> = (0..20).map(|i| image(at(10 * i))).collect();
    let missing = [3, 9, 15];
    let ghi: Vec<GhiReading> = (0..20)
        .filter(|i| !missing.contains(i))
        .map(|i| GhiReading {
            timestamp: at(10 * i as i64 + 1),
            ghi: 100.0 + i as f64,
        })
        .collect();
    let got = align(&images, &ghi, Duration::minutes(5));
    assert_eq!(got.samples.len(), 17);
    assert_eq!(got.dropped, 3);
    check_against_brute(&images, &ghi, 5);
}

proptest! {
    #[test]
    fn align_matches_exhaustive_matcher(
        img_offsets in proptest::collection::btree_set(0i64..400, 1..30),
        rd_offsets in proptest::collection::btree_set(0i64..400, 1..30),
        tol in 0i64..8,
    ) {
        let images: Vec<ImageRecord> = img_offsets.iter().map(|&m| image(at(m))).collect();
        let ghi: Vec<GhiReading> = rd_offsets
            .iter()
            .map(|&m| GhiReading { timestamp: at(m), ghi: m as f64 })
            .collect();
        check_against_brute(&images, &ghi, tol);
    }

    #[test]
    fn split_is_a_partition(n in 2usize..200, fraction in 0.05f64..0.95, seed in any::<u64>(), random in any::<bool>()) {
        let samples: Vec<AlignedSample> = (0..n).map(|i| sample(at(10 * i as i64), i as f64)).collect();
        let policy = if random {
            SplitPolicy::RandomByFraction { fraction, seed }
        } else {
            SplitPolicy::ChronologicalPrefix { fraction }
        };
        let (train, test) = split(&samples, &policy).unwrap();
        prop_assert_eq!(train.len() + test.len(), n);
        let mut all: Vec<Timestamp> = train.iter().chain(&test).map(|s| s.timestamp).collect();
        all.sort();
        prop_assert_eq!(all, samples.iter().map(|s| s.timestamp).collect::<Vec<_>>());
        prop_assert!(train.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
        prop_assert!(test.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    }
}

fn four_years() -> Vec<AlignedSample> {
    let mut out = Vec::new();
    for year in 2013..2017 {
        for day in 0..30 {
            let t = Utc.with_ymd_and_hms(year, 3, 1, 18, 0, 0).unwrap() + Duration::days(day * 7);
            out.push(sample(t, 500.0));
        }
    }
    out
}

#[test]
fn random_years_holds_out_whole_years() {
    let samples = four_years();
    let policy = SplitPolicy::parse("random-years:2", 5).unwrap();
    let (train, test) = split(&samples, &policy).unwrap();
    let test_years: std::collections::BTreeSet<i32> = test.iter().map(|s| s.timestamp.year()).collect();
    assert_eq!(test_years.len(), 2);
    for s in &samples {
        let in_test = test.contains(s);
        assert_eq!(in_test, test_years.contains(&s.timestamp.year()));
        assert_eq!(!in_test, train.contains(s));
    }
    assert_eq!(test.len(), 60);
    let again = split(&samples, &policy).unwrap();
    assert_eq!(again.1, test);
}

#[test]
fn explicit_years() {
    let samples = four_years();
    let (train, test) = split(&samples, &SplitPolicy::parse("years:2014,2016", 0).unwrap()).unwrap();
    assert!(test.iter().all(|s| [2014, 2016].contains(&s.timestamp.year())));
    assert!(train.iter().all(|s| [2013, 2015].contains(&s.timestamp.year())));
    let none = split(&samples, &SplitPolicy::parse("years:1999", 0).unwrap());
    assert!(matches!(none, Err(GhiError::Config(_))));
}
