use ghicast::lsa::{fit, transform, LsaConfig, SvdBackend};
use ghicast::preprocess::FeatureMatrix;
use ghicast::GhiError;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random(rows: usize, cols: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    FeatureMatrix::from_vec(rows, cols, data).unwrap()
}

fn oracle_singular_values(x: &FeatureMatrix) -> Vec<f64> {
    let m = DMatrix::from_row_slice(x.rows, x.cols, &x.data);
    let mut ev: Vec<f64> = (m.transpose() * &m).symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev.into_iter().map(|v| v.max(0.0).sqrt()).collect()
}

#[test]
fn fifty_by_forty_matches_oracle_on_both_backends() {
    let x = random(50, 40, 17);
    let oracle = oracle_singular_values(&x);
    for backend in [SvdBackend::Dense, SvdBackend::Randomized] {
        let cfg = LsaConfig { backend, seed: 3, ..LsaConfig::with_k(10) };
        let (model, _) = fit(&x, &cfg).unwrap();
        for (i, (got, want)) in model.singular_values.iter().zip(&oracle).enumerate() {
            let rel = (got - want).abs() / want;
            assert!(rel < 1e-6, "{backend:?} σ_{i}: {rel}");
        }
        assert!(model.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn right_vectors_are_orthonormal() {
    for (rows, cols, backend) in [(80, 30, SvdBackend::Dense), (600, 40, SvdBackend::Randomized), (30, 700, SvdBackend::Auto)] {
        let x = random(rows, cols, rows as u64);
        let (model, _) = fit(&x, &LsaConfig { backend, ..LsaConfig::with_k(12) }).unwrap();
        let v = model.right_vectors.to_nalgebra();
        let gram = v.transpose() * &v;
        let err = (gram - DMatrix::<f64>::identity(12, 12)).abs().max();
        assert!(err <= 1e-8, "{backend:?}: {err}");
    }
}

#[test]
fn transform_agrees_with_fit_and_naive_product() {
    let x = random(60, 25, 5);
    let (model, embedded) = fit(&x, &LsaConfig::with_k(6)).unwrap();

    let one = FeatureMatrix::from_vec(1, 25, x.row(7).to_vec()).unwrap();
    let t = transform(&model, &one).unwrap();
    for j in 0..6 {
        assert!((t.get(0, j) - embedded.get(7, j)).abs() <= 1e-6 * embedded.frobenius_norm());
    }

    let zero = transform(&model, &FeatureMatrix::zeros(1, 25)).unwrap();
    assert_eq!(zero.data, vec![0.0; 6]);

    let q = random(9, 25, 6);
    let got = transform(&model, &q).unwrap();
    for r in 0..9 {
        for c in 0..6 {
            let mut s = 0.0;
            for d in 0..25 {
                s += q.get(r, d) * model.right_vectors.data[d * 6 + c];
            }
            assert!((got.get(r, c) - s).abs() <= 1e-9);
        }
    }
}

#[test]
fn projection_is_idempotent() {
    let x = random(40, 30, 8);
    let (model, embedded) = fit(&x, &LsaConfig::with_k(5)).unwrap();
    let v = model.right_vectors.to_nalgebra();
    let e = DMatrix::from_row_slice(40, 5, &embedded.data);
    let back = e * v.transpose();
    let recon = FeatureMatrix::from_vec(40, 30, back.transpose().as_slice().to_vec()).unwrap();
    let again = transform(&model, &recon).unwrap();
    let diff: f64 = again.data.iter().zip(&embedded.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(diff <= 1e-6 * embedded.frobenius_norm());
}

#[test]
fn randomized_backend_is_reproducible() {
    let x = random(700, 50, 2);
    let cfg = LsaConfig { seed: 99, backend: SvdBackend::Randomized, ..LsaConfig::with_k(8) };
    let (a, ea) = fit(&x, &cfg).unwrap();
    let (b, eb) = fit(&x, &cfg).unwrap();
    assert!(a.iterations > 0);
    assert_eq!(a, b);
    assert_eq!(ea, eb);
}

#[test]
fn shape_error_names_both_widths() {
    let (model, _) = fit(&random(10, 8, 1), &LsaConfig::with_k(2)).unwrap();
    match transform(&model, &random(2, 5, 1)) {
        Err(GhiError::Shape(msg)) => assert!(msg.contains('8') && msg.contains('5'), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn truncation_keeps_leading_components() {
    let x = random(50, 20, 4);
    let (big, _) = fit(&x, &LsaConfig { backend: SvdBackend::Dense, ..LsaConfig::with_k(8) }).unwrap();
    let (small, _) = fit(&x, &LsaConfig { backend: SvdBackend::Dense, ..LsaConfig::with_k(3) }).unwrap();
    let cut = big.truncate(3);
    assert_eq!(cut.k, 3);
    for (a, b) in cut.singular_values.iter().zip(&small.singular_values) {
        assert!((a - b).abs() <= 1e-10 * a);
    }
    for (a, b) in cut.right_vectors.data.iter().zip(&small.right_vectors.data) {
        assert!((a - b).abs() <= 1e-8);
    }
}
