//! Bundle directory: `manifest.json` plus one GHIM matrix file per stored array.
//!
//! The manifest carries the configuration, its hash, the bundle format version and a
//! SHA-256 for every payload. Wall-clock timings go to `timing.json`, outside the
//! manifest, so identical training runs produce identical manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HorizonModel, ModelBundle, PipelineConfig, TrainingMeta};
use crate::error::{GhiError, Result};
use crate::linalg::Dense;
use crate::lsa::LsaModel;
use crate::matrix_io;
use crate::preprocess::FeatureMatrix;
use crate::regress::forest::{ForestConfig, ForestModel, Node, Tree};
use crate::regress::{knn_fit, NeighborSearch, RegressorConfig, RegressorModel};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const TIMING_FILE: &str = "timing.json";
const NODE_COLUMNS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FileEntry {
    rows: usize,
    cols: usize,
    sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RegressorEntry {
    Knn {
        k: usize,
        features: String,
        targets: String,
    },
    Rf {
        n_features: usize,
        n_trees: usize,
        config: ForestConfig,
        nodes: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LsaEntry {
    k: usize,
    input_dim: usize,
    rank_deficient: bool,
    iterations: usize,
    singular_values: String,
    right_vectors: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HorizonEntry {
    steps: usize,
    label: String,
    lsa: LsaEntry,
    regressor: RegressorEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    generator: String,
    config_hash: String,
    config: PipelineConfig,
    training: TrainingMeta,
    nowcast: RegressorEntry,
    horizons: Vec<HorizonEntry>,
    files: BTreeMap<String, FileEntry>,
}

struct Writer<'a> {
    dir: &'a Path,
    files: BTreeMap<String, FileEntry>,
}

impl Writer<'_> {
    fn put(&mut self, name: String, rows: usize, cols: usize, data: &[f64]) -> Result<String> {
        let sha256 = matrix_io::write(&self.dir.join(&name), rows, cols, data)?;
        self.files.insert(name.clone(), FileEntry { rows, cols, sha256 });
        Ok(name)
    }

    fn regressor(&mut self, prefix: &str, model: &RegressorModel) -> Result<RegressorEntry> {
        Ok(match model {
            RegressorModel::Knn(m) => RegressorEntry::Knn {
                k: m.k,
                features: self.put(
                    format!("{prefix}_knn_features.ghim"),
                    m.features.rows,
                    m.features.cols,
                    &m.features.data,
                )?,
                targets: self.put(
                    format!("{prefix}_knn_targets.ghim"),
                    m.targets.len(),
                    1,
                    &m.targets,
                )?,
            },
            RegressorModel::Forest(f) => {
                let mut data = Vec::new();
                for (t, tree) in f.trees.iter().enumerate() {
                    for node in &tree.nodes {
                        let row = match *node {
                            Node::Leaf { value } => [t as f64, -1.0, 0.0, 0.0, 0.0, value],
                            Node::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => [
                                t as f64,
                                feature as f64,
                                threshold,
                                left as f64,
                                right as f64,
                                0.0,
                            ],
                        };
                        data.extend_from_slice(&row);
                    }
                }
                RegressorEntry::Rf {
                    n_features: f.n_features,
                    n_trees: f.trees.len(),
                    config: f.config.clone(),
                    nodes: self.put(
                        format!("{prefix}_rf_nodes.ghim"),
                        data.len() / NODE_COLUMNS,
                        NODE_COLUMNS,
                        &data,
                    )?,
                }
            }
        })
    }
}

pub fn save_bundle(bundle: &ModelBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| GhiError::io(dir, e))?;
    let mut w = Writer {
        dir,
        files: BTreeMap::new(),
    };
    let nowcast = w.regressor("nowcast", &bundle.nowcast)?;
    let mut horizons = Vec::new();
    for h in &bundle.horizons {
        let prefix = format!("h{:03}", h.steps);
        let lsa = LsaEntry {
            k: h.lsa.k,
            input_dim: h.lsa.input_dim,
            rank_deficient: h.lsa.rank_deficient,
            iterations: h.lsa.iterations,
            singular_values: w.put(
                format!("{prefix}_lsa_singular_values.ghim"),
                1,
                h.lsa.k,
                &h.lsa.singular_values,
            )?,
            right_vectors: w.put(
                format!("{prefix}_lsa_right_vectors.ghim"),
                h.lsa.right_vectors.rows,
                h.lsa.right_vectors.cols,
                &h.lsa.right_vectors.data,
            )?,
        };
        let regressor = w.regressor(&prefix, &h.regressor)?;
        horizons.push(HorizonEntry {
            steps: h.steps,
            label: h.label.clone(),
            lsa,
            regressor,
        });
    }
    let manifest = Manifest {
        format_version: BUNDLE_FORMAT_VERSION,
        generator: format!("ghicast {}", env!("CARGO_PKG_VERSION")),
        config_hash: bundle.config.hash(),
        config: bundle.config.clone(),
        training: bundle.meta.clone(),
        nowcast,
        horizons,
        files: w.files,
    };
    let path = dir.join(MANIFEST_FILE);
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
    fs::write(&path, body).map_err(|e| GhiError::io(&path, e))?;
    let timing = dir.join(TIMING_FILE);
    fs::write(
        &timing,
        format!("{{\"fit_seconds\": {:.3}}}\n", bundle.meta.fit_seconds),
    )
    .map_err(|e| GhiError::io(&timing, e))?;
    Ok(())
}

/// Loads a bundle, verifying its format version and every payload checksum.
pub fn load_bundle(dir: &Path) -> Result<ModelBundle> {
    load(dir, None)
}

/// As [`load_bundle`], but also requires the bundle's configuration hash to equal that
/// of `expected`.
pub fn load_bundle_strict(dir: &Path, expected: &PipelineConfig) -> Result<ModelBundle> {
    load(dir, Some(expected))
}

struct Reader<'a> {
    dir: &'a Path,
    files: &'a BTreeMap<String, FileEntry>,
}

impl Reader<'_> {
    fn get(&self, name: &str) -> Result<(usize, usize, Vec<f64>)> {
        let entry = self.files.get(name).ok_or_else(|| GhiError::Corrupt {
            file: name.to_string(),
            message: "not listed in the manifest".into(),
        })?;
        let (rows, cols, data) = matrix_io::read_checked(&self.dir.join(name), &entry.sha256)?;
        if (rows, cols) != (entry.rows, entry.cols) {
            return Err(GhiError::Corrupt {
                file: name.to_string(),
                message: format!(
                    "shape {rows}×{cols} differs from manifest {}×{}",
                    entry.rows, entry.cols
                ),
            });
        }
        Ok((rows, cols, data))
    }

    fn regressor(&self, entry: &RegressorEntry, search: NeighborSearch) -> Result<RegressorModel> {
        match entry {
            RegressorEntry::Knn {
                k,
                features,
                targets,
            } => {
                let (rows, cols, data) = self.get(features)?;
                let (t_rows, _, t) = self.get(targets)?;
                if t_rows != rows {
                    return Err(GhiError::Corrupt {
                        file: targets.clone(),
                        message: format!("{t_rows} targets for {rows} feature rows"),
                    });
                }
                let x = FeatureMatrix::from_vec(rows, cols, data)?;
                Ok(RegressorModel::Knn(knn_fit(&x, &t, *k, search)?))
            }
            RegressorEntry::Rf {
                n_features,
                n_trees,
                config,
                nodes,
            } => {
                let (_, _, data) = self.get(nodes)?;
                let corrupt = |message: String| GhiError::Corrupt {
                    file: nodes.clone(),
                    message,
                };
                let mut trees: Vec<Tree> = vec![Tree { nodes: Vec::new() }; *n_trees];
                for row in data.chunks_exact(NODE_COLUMNS) {
                    let t = row[0] as usize;
                    let tree = trees
                        .get_mut(t)
                        .ok_or_else(|| corrupt(format!("tree index {t} out of range")))?;
                    tree.nodes.push(if row[1] < 0.0 {
                        Node::Leaf { value: row[5] }
                    } else {
                        Node::Split {
                            feature: row[1] as usize,
                            threshold: row[2],
                            left: row[3] as usize,
                            right: row[4] as usize,
                        }
                    });
                }
                for tree in &trees {
                    let n = tree.nodes.len();
                    let valid = n > 0
                        && tree.nodes.iter().all(|node| match *node {
                            Node::Leaf { .. } => true,
                            Node::Split {
                                feature,
                                left,
                                right,
                                ..
                            } => feature < *n_features && left < n && right < n,
                        });
                    if !valid {
                        return Err(corrupt("malformed tree".into()));
                    }
                }
                Ok(RegressorModel::Forest(ForestModel {
                    trees,
                    n_features: *n_features,
                    config: config.clone(),
                }))
            }
        }
    }
}

fn load(dir: &Path, expected: Option<&PipelineConfig>) -> Result<ModelBundle> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| GhiError::io(&path, e))?;
    let version = serde_json::from_str::<serde_json::Value>(&text)
        .ok()
        .and_then(|v| v.get("format_version").and_then(|f| f.as_u64()));
    match version {
        Some(v) if v == BUNDLE_FORMAT_VERSION as u64 => {}
        Some(v) => {
            return Err(GhiError::Incompatible(format!(
                "bundle format version {v}, this build reads {BUNDLE_FORMAT_VERSION}"
            )))
        }
        None => {
            return Err(GhiError::Corrupt {
                file: MANIFEST_FILE.into(),
                message: "missing format_version".into(),
            })
        }
    }
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| GhiError::Corrupt {
        file: MANIFEST_FILE.into(),
        message: e.to_string(),
    })?;
    if manifest.config.hash() != manifest.config_hash {
        return Err(GhiError::Incompatible(
            "manifest config does not match its recorded hash".into(),
        ));
    }
    if let Some(expected) = expected {
        let want = expected.hash();
        if want != manifest.config_hash {
            return Err(GhiError::Incompatible(format!(
                "bundle config hash {} differs from expected {want}",
                manifest.config_hash
            )));
        }
    }

    let search = match manifest.config.regressor {
        RegressorConfig::Knn { search, .. } => search,
        RegressorConfig::Rf { .. } => NeighborSearch::Auto,
    };
    let reader = Reader {
        dir,
        files: &manifest.files,
    };
    let nowcast = reader.regressor(&manifest.nowcast, search)?;
    let mut horizons = Vec::new();
    for h in &manifest.horizons {
        let (_, _, singular_values) = reader.get(&h.lsa.singular_values)?;
        let (rows, cols, data) = reader.get(&h.lsa.right_vectors)?;
        if rows != h.lsa.input_dim || cols != h.lsa.k || singular_values.len() != h.lsa.k {
            return Err(GhiError::Corrupt {
                file: h.lsa.right_vectors.clone(),
                message: "reducer shape disagrees with the manifest".into(),
            });
        }
        horizons.push(HorizonModel {
            steps: h.steps,
            label: h.label.clone(),
            lsa: LsaModel {
                k: h.lsa.k,
                input_dim: h.lsa.input_dim,
                singular_values,
                right_vectors: Dense { rows, cols, data },
                rank_deficient: h.lsa.rank_deficient,
                iterations: h.lsa.iterations,
            },
            regressor: reader.regressor(&h.regressor, search)?,
        });
    }
    Ok(ModelBundle {
        config: manifest.config,
        nowcast,
        horizons,
        meta: manifest.training,
    })
}
