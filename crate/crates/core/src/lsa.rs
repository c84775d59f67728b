//! Truncated SVD ("latent semantic analysis") reducer.
//!
//! `fit` factorises the training matrix `X ≈ U_k Σ_k V_kᵀ` and returns the embedding
//! `X·V_k` (equal to `U_k Σ_k`); `transform` projects new rows with the stored `V_k`.
//! The input is **not** mean-centred, unlike PCA.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GhiError, Result};
use crate::linalg::{self, Dense};
use crate::preprocess::FeatureMatrix;

/// Singular values at or below this fraction of the largest count as zero.
const ZERO_SINGULAR_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SvdBackend {
    /// Dense below `dense_threshold`, randomized above.
    Auto,
    Dense,
    Randomized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsaConfig {
    pub k: usize,
    pub backend: SvdBackend,
    /// Exact decomposition when `min(rows, cols)` is at most this.
    pub dense_threshold: usize,
    pub oversampling: usize,
    /// Power iterations always performed before convergence is checked.
    pub power_iters: usize,
    /// Upper bound on power iterations while the residual is above `tolerance`.
    pub max_power_iters: usize,
    /// Largest accepted `‖X vᵢ − σᵢ uᵢ‖ / σ₁` over the leading `k` pairs.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for LsaConfig {
    fn default() -> Self {
        LsaConfig {
            k: 20,
            backend: SvdBackend::Auto,
            dense_threshold: 512,
            oversampling: 10,
            power_iters: 4,
            max_power_iters: 150,
            tolerance: 1e-10,
            seed: 0,
        }
    }
}

impl LsaConfig {
    pub fn with_k(k: usize) -> Self {
        LsaConfig {
            k,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsaModel {
    pub k: usize,
    pub input_dim: usize,
    /// Non-increasing, length `k`.
    pub singular_values: Vec<f64>,
    /// `input_dim × k`, orthonormal columns.
    pub right_vectors: Dense,
    /// Fewer than `k` non-zero singular values were found.
    pub rank_deficient: bool,
    /// Power iterations used (0 for the dense backend).
    pub iterations: usize,
}

impl LsaModel {
    /// Keeps the leading `k` components.
    pub fn truncate(&self, k: usize) -> LsaModel {
        assert!(k >= 1 && k <= self.k, "cannot truncate rank {} to {k}", self.k);
        let top = self.singular_values[0];
        LsaModel {
            k,
            input_dim: self.input_dim,
            singular_values: self.singular_values[..k].to_vec(),
            right_vectors: self.right_vectors.leading_columns(k),
            rank_deficient: self.singular_values[..k]
                .iter()
                .any(|&s| !(s > top * ZERO_SINGULAR_RATIO && s > 0.0)),
            iterations: self.iterations,
        }
    }
}

/// Fits the reducer on `x` and returns it with the training embedding `x·V_k`.
pub fn fit(x: &FeatureMatrix, config: &LsaConfig) -> Result<(LsaModel, FeatureMatrix)> {
    let k = config.k;
    if x.rows < 2 {
        return Err(GhiError::Config(format!(
            "truncated SVD needs at least 2 rows, got {}",
            x.rows
        )));
    }
    let limit = x.rows.min(x.cols);
    if k == 0 || k > limit {
        return Err(GhiError::Config(format!(
            "rank k={k} outside [1, {limit}] for a {}×{} matrix",
            x.rows, x.cols
        )));
    }
    let use_dense = match config.backend {
        SvdBackend::Dense => true,
        SvdBackend::Randomized => false,
        SvdBackend::Auto => limit <= config.dense_threshold,
    };
    let (sigma, mut v, iterations) = if use_dense {
        let (s, v) = dense_right_factors(x, k);
        (s, v, 0)
    } else {
        randomized_right_factors(x, k, config)
    };
    linalg::canonical_signs(&mut v);

    let top = sigma.first().copied().unwrap_or(0.0);
    let nonzero = sigma
        .iter()
        .filter(|&&s| s > top * ZERO_SINGULAR_RATIO && s > 0.0)
        .count();
    let rank_deficient = nonzero < k;
    if rank_deficient {
        log::warn!("matrix has only {nonzero} non-zero singular values, fewer than k={k}");
    }

    let model = LsaModel {
        k,
        input_dim: x.cols,
        singular_values: sigma,
        right_vectors: Dense::from_nalgebra(&v),
        rank_deficient,
        iterations,
    };
    let embedded = transform(&model, x)?;
    Ok((model, embedded))
}

/// Projects rows onto the stored right singular vectors: `T·V_k`.
pub fn transform(model: &LsaModel, t: &FeatureMatrix) -> Result<FeatureMatrix> {
    if t.cols != model.input_dim {
        return Err(GhiError::Shape(format!(
            "projection expects {} columns, got {}",
            model.input_dim, t.cols
        )));
    }
    let product = linalg::mul(t, &model.right_vectors);
    Ok(FeatureMatrix {
        rows: t.rows,
        cols: model.k,
        data: product.data,
        row_timestamps: t.row_timestamps.clone(),
    })
}

/// Exact route: thin SVD of whichever orientation is tall.
fn dense_right_factors(x: &FeatureMatrix, k: usize) -> (Vec<f64>, DMatrix<f64>) {
    let a = DMatrix::from_row_slice(x.rows, x.cols, &x.data);
    if x.rows >= x.cols {
        let (_, s, v) = linalg::thin_svd_tall(&a);
        (s[..k].to_vec(), v.columns(0, k).into_owned())
    } else {
        // Xᵀ = U' S V'ᵀ, so the right vectors of X are U'.
        let (u, s, _) = linalg::thin_svd_tall(&a.transpose());
        (s[..k].to_vec(), u.columns(0, k).into_owned())
    }
}

/// Randomized range finder with subspace (power) iteration.
///
/// Each pass forms `Z = XᵀQ`, takes its SVD `Z = W S Ũᵀ` (so `S` holds the Ritz values),
/// and then `Y = X W`, whose first `k` columns give the residual check for free. After
/// `power_iters` passes the loop stops once the residual falls under `tolerance` or
/// `max_power_iters` is reached.
fn randomized_right_factors(
    x: &FeatureMatrix,
    k: usize,
    config: &LsaConfig,
) -> (Vec<f64>, DMatrix<f64>, usize) {
    let limit = x.rows.min(x.cols);
    let l = (k + config.oversampling).min(limit);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let omega = Dense {
        rows: x.cols,
        cols: l,
        data: (0..x.cols * l)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect(),
    };
    let mut q = linalg::orthonormalize(&linalg::mul(x, &omega));

    let mut iteration = 0;
    loop {
        let z = linalg::mul_transpose(x, &q).to_nalgebra();
        let (w, sigma, u_small) = linalg::thin_svd_tall(&z);
        let w_dense = Dense::from_nalgebra(&w);
        let y = linalg::mul(x, &w_dense);

        if iteration >= config.power_iters {
            let done = iteration >= config.max_power_iters.max(config.power_iters)
                || residual(&y, &q, &u_small, &sigma, k) <= config.tolerance;
            if done {
                return (sigma[..k].to_vec(), w.columns(0, k).into_owned(), iteration);
            }
        }
        q = linalg::orthonormalize(&y);
        iteration += 1;
    }
}

/// `max_i ‖X wᵢ − σᵢ Q ũᵢ‖ / σ₁` over the first `k` Ritz pairs.
fn residual(y: &Dense, q: &Dense, u_small: &DMatrix<f64>, sigma: &[f64], k: usize) -> f64 {
    let top = sigma.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0.0;
    }
    let l = q.cols;
    let mut worst = 0.0f64;
    for i in 0..k {
        let mut sq = 0.0;
        for r in 0..y.rows {
            let q_row = q.row(r);
            let u_i: f64 = (0..l).map(|c| q_row[c] * u_small[(c, i)]).sum();
            let diff = y.data[r * y.cols + i] - sigma[i] * u_i;
            sq += diff * diff;
        }
        worst = worst.max(sq.sqrt() / top);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: usize, cols: usize, data: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn identity_spectrum() {
        let x = matrix(3, 3, &[1., 0., 0., 0., 1., 0., 0., 0., 1.]);
        let (m, xp) = fit(&x, &LsaConfig::with_k(2)).unwrap();
        assert_eq!(m.singular_values.len(), 2);
        for s in &m.singular_values {
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!((xp.rows, xp.cols), (3, 2));
        assert!(!m.rank_deficient);
    }

    #[test]
    fn rank_one_matrix_flags_deficiency() {
        let x = matrix(2, 2, &[1., 2., 2., 4.]);
        let (m, _) = fit(&x, &LsaConfig::with_k(2)).unwrap();
        assert!((m.singular_values[0] - 5.0).abs() < 1e-12);
        assert!(m.singular_values[1].abs() < 1e-12);
        assert!(m.rank_deficient);
    }

    #[test]
    fn k_out_of_range() {
        let x = matrix(2, 3, &[1., 2., 3., 4., 5., 6.]);
        assert!(matches!(fit(&x, &LsaConfig::with_k(0)), Err(GhiError::Config(_))));
        assert!(matches!(fit(&x, &LsaConfig::with_k(3)), Err(GhiError::Config(_))));
        let one = matrix(1, 3, &[1., 2., 3.]);
        assert!(matches!(fit(&one, &LsaConfig::with_k(1)), Err(GhiError::Config(_))));
    }

    #[test]
    fn transform_checks_width_and_is_linear() {
        let x = matrix(3, 2, &[1., 0., 0., 2., 1., 1.]);
        let (m, xp) = fit(&x, &LsaConfig::with_k(1)).unwrap();
        let zero = matrix(1, 2, &[0., 0.]);
        assert_eq!(transform(&m, &zero).unwrap().data, vec![0.0]);
        let row = matrix(1, 2, &[0., 2.]);
        assert!((transform(&m, &row).unwrap().data[0] - xp.get(1, 0)).abs() < 1e-12);
        let err = transform(&m, &matrix(1, 3, &[0., 0., 0.])).unwrap_err();
        assert!(err.to_string().contains('2') && err.to_string().contains('3'));
    }

    #[test]
    fn wide_matrix_uses_transposed_route() {
        let x = matrix(2, 4, &[3., 0., 0., 0., 0., 0., 2., 0.]);
        let (m, _) = fit(&x, &LsaConfig::with_k(2)).unwrap();
        assert!((m.singular_values[0] - 3.0).abs() < 1e-12);
        assert!((m.singular_values[1] - 2.0).abs() < 1e-12);
        assert!((m.right_vectors.data[0] - 1.0).abs() < 1e-12);
    }
}
