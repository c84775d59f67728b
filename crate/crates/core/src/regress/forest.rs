//! Random forest regression: bagged CART trees with per-split feature subsampling.
//!
//! Every tree draws a bootstrap sample of size `n` from its own ChaCha stream
//! `(seed, tree index)`, so the forest is identical whatever the thread schedule.
//! Splits minimise the summed squared error of the two children.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GhiError, Result};
use crate::preprocess::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per split; `None` means `⌈√d⌉`.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 200,
            max_depth: 100,
            min_samples_leaf: 1,
            max_features: None,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn features_per_split(&self, dim: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize)
            .clamp(1, dim.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Index of the leaf reached by `row`.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub config: ForestConfig,
}

pub fn rf_fit(x: &FeatureMatrix, y: &[f64], config: &ForestConfig) -> Result<ForestModel> {
    if x.rows != y.len() {
        return Err(GhiError::Shape(format!(
            "{} feature rows but {} targets",
            x.rows,
            y.len()
        )));
    }
    if x.rows < 2 || x.cols == 0 {
        return Err(GhiError::Config(format!(
            "random forest needs at least 2 rows and 1 feature, got {}×{}",
            x.rows, x.cols
        )));
    }
    if config.n_trees == 0 || config.min_samples_leaf == 0 {
        return Err(GhiError::Config(
            "n_trees and min_samples_leaf must be ≥ 1".into(),
        ));
    }
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| grow_tree(x, y, config, t))
        .collect();
    Ok(ForestModel {
        trees,
        n_features: x.cols,
        config: config.clone(),
    })
}

pub fn rf_predict(model: &ForestModel, q: &FeatureMatrix) -> Result<Vec<f64>> {
    if q.cols != model.n_features {
        return Err(GhiError::Shape(format!(
            "forest was trained on {} features, query has {}",
            model.n_features, q.cols
        )));
    }
    Ok((0..q.rows)
        .into_par_iter()
        .map(|i| model.predict_row(q.row(i)))
        .collect())
}

impl ForestModel {
    /// Mean of the per-tree leaf values.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for tree in &self.trees {
            let v = tree.predict_row(row);
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
        }
        (sum / self.trees.len() as f64).clamp(lo, hi)
    }
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

fn grow_tree(x: &FeatureMatrix, y: &[f64], config: &ForestConfig, index: usize) -> Tree {
    let mut rng = tree_rng(config.seed, index);
    let n = x.rows;
    let mut rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let mut builder = TreeBuilder {
        x,
        y,
        config,
        mtry: config.features_per_split(x.cols),
        nodes: Vec::new(),
        rng,
        scratch: Vec::with_capacity(n),
    };
    builder.grow(&mut rows, 0);
    Tree {
        nodes: builder.nodes,
    }
}

struct TreeBuilder<'a> {
    x: &'a FeatureMatrix,
    y: &'a [f64],
    config: &'a ForestConfig,
    mtry: usize,
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
    scratch: Vec<(f64, f64)>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    cost: f64,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let (lo, hi, sum) = rows.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, 0.0),
            |(lo, hi, s), &r| (lo.min(self.y[r]), hi.max(self.y[r]), s + self.y[r]),
        );
        let leaf_value = (sum / rows.len() as f64).clamp(lo, hi);
        self.nodes.push(Node::Leaf { value: leaf_value });

        let stop = depth >= self.config.max_depth
            || lo == hi
            || rows.len() < 2 * self.config.min_samples_leaf;
        if stop {
            return id;
        }
        let Some(choice) = self.best_split(rows) else {
            return id;
        };

        let x = self.x;
        let mut cut = 0;
        for i in 0..rows.len() {
            if x.get(rows[i], choice.feature) <= choice.threshold {
                rows.swap(i, cut);
                cut += 1;
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(cut);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<SplitChoice> {
        let n = rows.len();
        let min_leaf = self.config.min_samples_leaf;
        let total: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let total_sq: f64 = rows.iter().map(|&r| self.y[r] * self.y[r]).sum();
        let parent_cost = total_sq - total * total / n as f64;

        let candidates = sample_indices(&mut self.rng, self.x.cols, self.mtry).into_vec();
        let mut best: Option<SplitChoice> = None;
        for feature in candidates {
            self.scratch.clear();
            self.scratch
                .extend(rows.iter().map(|&r| (self.x.get(r, feature), self.y[r])));
            self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));

            let (mut left_sum, mut left_sq) = (0.0, 0.0);
            for i in 0..n - 1 {
                let (xv, yv) = self.scratch[i];
                left_sum += yv;
                left_sq += yv * yv;
                let next = self.scratch[i + 1].0;
                let n_left = i + 1;
                let n_right = n - n_left;
                if xv == next || n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                let right_sq = total_sq - left_sq;
                let cost = (left_sq - left_sum * left_sum / n_left as f64)
                    + (right_sq - right_sum * right_sum / n_right as f64);
                if best.as_ref().is_none_or(|b| cost < b.cost) {
                    let mut threshold = xv + (next - xv) / 2.0;
                    if threshold >= next {
                        threshold = xv;
                    }
                    best = Some(SplitChoice {
                        feature,
                        threshold,
                        cost,
                    });
                }
            }
        }
        // A split that does not reduce the error only adds depth.
        best.filter(|b| b.cost < parent_cost)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(xs: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_vec(xs.len(), 1, xs.to_vec()).unwrap()
    }

    #[test]
    fn constant_targets_give_constant_predictions() {
        let x = FeatureMatrix::from_rows(
            &(0..40).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect::<Vec<_>>(),
        )
        .unwrap();
        let y = vec![0.1; 40];
        let m = rf_fit(&x, &y, &ForestConfig { n_trees: 20, ..Default::default() }).unwrap();
        for p in rf_predict(&m, &x).unwrap() {
            assert_eq!(p, 0.1);
        }
    }

    #[test]
    fn stump_on_step_function() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let y: Vec<f64> = xs.iter().map(|&v| if v < 0.5 { 0.0 } else { 100.0 }).collect();
        let m = rf_fit(
            &column(&xs),
            &y,
            &ForestConfig {
                n_trees: 10,
                max_depth: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(m.trees.iter().all(|t| t.depth() <= 1));
        let p = rf_predict(&m, &column(&[0.1, 0.9])).unwrap();
        assert_eq!(p, vec![0.0, 100.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            rf_fit(&column(&[1.0]), &[1.0], &ForestConfig::default()),
            Err(GhiError::Config(_))
        ));
        let m = rf_fit(
            &column(&[1.0, 2.0]),
            &[1.0, 2.0],
            &ForestConfig { n_trees: 2, ..Default::default() },
        )
        .unwrap();
        assert!(matches!(
            rf_predict(&m, &FeatureMatrix::zeros(1, 2)),
            Err(GhiError::Shape(_))
        ));
    }

    #[test]
    fn sqrt_feature_rule() {
        let c = ForestConfig::default();
        assert_eq!(c.features_per_split(20), 5);
        assert_eq!(c.features_per_split(3072), 56);
        assert_eq!(c.features_per_split(1), 1);
    }
}
