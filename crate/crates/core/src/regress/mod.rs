//! Regressors: KNN, random forest and the persistence baseline.

pub mod forest;
pub mod knn;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::AlignedSample;
use crate::preprocess::FeatureMatrix;

pub use forest::{rf_fit, rf_predict, ForestConfig, ForestModel};
pub use knn::{knn_fit, knn_predict, KnnModel, NeighborSearch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RegressorConfig {
    Knn {
        k: usize,
        search: NeighborSearch,
    },
    Rf {
        n_trees: usize,
        max_depth: usize,
        min_samples_leaf: usize,
        max_features: Option<usize>,
    },
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig::knn()
    }
}

impl RegressorConfig {
    pub fn knn() -> Self {
        RegressorConfig::Knn {
            k: 2,
            search: NeighborSearch::Auto,
        }
    }

    pub fn rf() -> Self {
        let d = ForestConfig::default();
        RegressorConfig::Rf {
            n_trees: d.n_trees,
            max_depth: d.max_depth,
            min_samples_leaf: d.min_samples_leaf,
            max_features: d.max_features,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegressorConfig::Knn { .. } => "knn",
            RegressorConfig::Rf { .. } => "rf",
        }
    }

    pub fn fit(&self, x: &FeatureMatrix, y: &[f64], seed: u64) -> Result<RegressorModel> {
        Ok(match self {
            RegressorConfig::Knn { k, search } => RegressorModel::Knn(knn_fit(x, y, *k, *search)?),
            RegressorConfig::Rf {
                n_trees,
                max_depth,
                min_samples_leaf,
                max_features,
            } => RegressorModel::Forest(rf_fit(
                x,
                y,
                &ForestConfig {
                    n_trees: *n_trees,
                    max_depth: *max_depth,
                    min_samples_leaf: *min_samples_leaf,
                    max_features: *max_features,
                    seed,
                },
            )?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegressorModel {
    Knn(KnnModel),
    Forest(ForestModel),
}

impl RegressorModel {
    pub fn predict(&self, q: &FeatureMatrix) -> Result<Vec<f64>> {
        match self {
            RegressorModel::Knn(m) => knn_predict(m, q),
            RegressorModel::Forest(m) => rf_predict(m, q),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            RegressorModel::Knn(m) => m.features.cols,
            RegressorModel::Forest(m) => m.n_features,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegressorModel::Knn(_) => "knn",
            RegressorModel::Forest(_) => "rf",
        }
    }
}

/// Persistence baseline: the forecast for `anchor + horizon` is the GHI at the anchor.
pub fn persistence_predict(
    samples: &[AlignedSample],
    anchors: &[usize],
    _horizon_steps: usize,
) -> Vec<f64> {
    anchors.iter().map(|&a| samples[a].ghi).collect()
}
