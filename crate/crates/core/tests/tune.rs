use ghicast::pipeline::tune::{tune_frames, TUNING_CSV_HEADER};
use ghicast::pipeline::{load_dataset, tune, PipelineConfig};
use ghicast::preprocess::FrameSeries;
use ghicast::synth::{generate, SynthConfig};

fn frames(days: usize, sun_marker: bool, cfg: &PipelineConfig) -> FrameSeries {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig { days, noise_sd: 0.0, sun_marker, image_side: 32, ..SynthConfig::default() };
    generate(&synth, dir.path()).unwrap();
    let data = load_dataset(&dir.path().join("images"), &dir.path().join("ghi.csv"), cfg).unwrap();
    FrameSeries::decode(&data.samples, cfg.image_side).unwrap()
}

fn base() -> PipelineConfig {
    PipelineConfig { image_side: 8, horizons: vec![6, 12], ..PipelineConfig::default() }
}

#[test]
fn grid_shape_and_csv() {
    let cfg = base();
    let f = frames(4, true, &cfg);
    let report = tune_frames(&cfg, &[10, 20], &[6, 12], &f).unwrap();
    for h in ["+1h", "+2h"] {
        let rows: Vec<_> = report.rows_for(h).collect();
        assert_eq!(rows.len(), 4);
        let cells: Vec<(usize, i64)> = rows.iter().map(|r| (r.k, r.lookback_min)).collect();
        assert_eq!(cells, [(10, 60), (10, 120), (20, 60), (20, 120)]);
    }
    let csv = report.to_csv();
    assert_eq!(csv.lines().next(), Some(TUNING_CSV_HEADER));
    assert_eq!(csv.lines().count(), 1 + 8);
    assert_eq!(report.validation_frames + report.train_frames, f.len());
    assert_eq!(report, tune_frames(&cfg, &[10, 20], &[6, 12], &f).unwrap());
}

#[test]
fn infeasible_cells_are_flagged_not_fatal() {
    let cfg = base();
    let f = frames(3, true, &cfg);
    let report = tune_frames(&cfg, &[5, 100_000], &[3], &f).unwrap();
    let bad: Vec<_> = report.rows.iter().filter(|r| r.k == 100_000).collect();
    assert_eq!(bad.len(), 2);
    assert!(bad.iter().all(|r| r.nmape_pct.is_none() && r.error.is_some()));
    assert!(report.to_csv().contains("failed:"));
    assert_eq!(report.argmin, Some((5, 30)));
    assert!(tune(&cfg, &[], &[3], &[]).is_err());
}

#[test]
fn rank_beyond_intrinsic_leaves_error_flat() {
    // Without the sun marker every frame is background plus a disk of one varying colour,
    // so a window of m frames spans at most m + 1 dimensions.
    let cfg = PipelineConfig { lookback: 3, ..base() };
    let f = frames(8, false, &cfg);
    let ks = [6, 10, 20, 40];
    let report = tune_frames(&cfg, &ks, &[3], &f).unwrap();
    for h in ["+1h", "+2h"] {
        let values: Vec<f64> = report.rows_for(h).map(|r| r.nmape_pct.unwrap()).collect();
        let spread = values.iter().cloned().fold(f64::MIN, f64::max) - values.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread <= 1.0, "{h}: {values:?}");
    }
}
