//! K-nearest-neighbours regression with Euclidean distance.
//!
//! The prediction is the unweighted mean of the `K` closest training targets. Neighbours
//! are ordered by `(squared distance, training row)`, so equal distances favour the lower
//! row index. The k-d tree accelerator returns exactly the neighbour set of the exhaustive
//! scan.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GhiError, Result};
use crate::preprocess::FeatureMatrix;

const LEAF_SIZE: usize = 16;
/// `Auto` builds a k-d tree only up to this many dimensions.
const KD_MAX_DIM: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborSearch {
    Auto,
    Brute,
    KdTree,
}

#[derive(Debug, Clone)]
pub struct KnnModel {
    pub features: FeatureMatrix,
    pub targets: Vec<f64>,
    pub k: usize,
    index: Option<KdTree>,
}

impl PartialEq for KnnModel {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k && self.features == other.features && self.targets == other.targets
    }
}

pub fn knn_fit(
    x: &FeatureMatrix,
    y: &[f64],
    k: usize,
    search: NeighborSearch,
) -> Result<KnnModel> {
    if k == 0 {
        return Err(GhiError::Config("KNN needs K ≥ 1".into()));
    }
    if x.rows != y.len() {
        return Err(GhiError::Shape(format!(
            "{} feature rows but {} targets",
            x.rows,
            y.len()
        )));
    }
    if k > x.rows {
        return Err(GhiError::Config(format!(
            "K={k} exceeds the {} training rows",
            x.rows
        )));
    }
    let use_tree = match search {
        NeighborSearch::Brute => false,
        NeighborSearch::KdTree => true,
        NeighborSearch::Auto => x.cols <= KD_MAX_DIM && x.rows > 4 * LEAF_SIZE,
    };
    Ok(KnnModel {
        features: x.clone(),
        targets: y.to_vec(),
        k,
        index: use_tree.then(|| KdTree::build(x)),
    })
}

pub fn knn_predict(model: &KnnModel, q: &FeatureMatrix) -> Result<Vec<f64>> {
    model.check_dim(q)?;
    Ok((0..q.rows)
        .into_par_iter()
        .map(|i| model.predict_row(q.row(i)))
        .collect())
}

impl KnnModel {
    pub fn has_index(&self) -> bool {
        self.index.is_some()
    }

    /// Re-attaches (or drops) the accelerator, e.g. after deserialisation.
    pub fn with_search(mut self, search: NeighborSearch) -> Self {
        let use_tree = match search {
            NeighborSearch::Brute => false,
            NeighborSearch::KdTree => true,
            NeighborSearch::Auto => {
                self.features.cols <= KD_MAX_DIM && self.features.rows > 4 * LEAF_SIZE
            }
        };
        self.index = use_tree.then(|| KdTree::build(&self.features));
        self
    }

    fn check_dim(&self, q: &FeatureMatrix) -> Result<()> {
        if q.cols != self.features.cols {
            return Err(GhiError::Shape(format!(
                "KNN model has {} features, query has {}",
                self.features.cols, q.cols
            )));
        }
        Ok(())
    }

    /// The `K` nearest training rows as `(squared distance, row)`, closest first.
    pub fn neighbors(&self, query: &[f64]) -> Vec<(f64, usize)> {
        let mut best = Best::new(self.k);
        match &self.index {
            Some(tree) => tree.search(&self.features, query, &mut best),
            None => {
                for i in 0..self.features.rows {
                    best.offer(sq_dist(self.features.row(i), query), i);
                }
            }
        }
        best.items
    }

    pub fn neighbors_brute(&self, query: &[f64]) -> Vec<(f64, usize)> {
        let mut best = Best::new(self.k);
        for i in 0..self.features.rows {
            best.offer(sq_dist(self.features.row(i), query), i);
        }
        best.items
    }

    fn predict_row(&self, query: &[f64]) -> f64 {
        mean_of(&self.targets, self.neighbors(query))
    }
}

/// Mean of the selected targets, summed in training-row order.
pub(crate) fn mean_of(targets: &[f64], neighbors: Vec<(f64, usize)>) -> f64 {
    let mut rows: Vec<usize> = neighbors.into_iter().map(|(_, i)| i).collect();
    rows.sort_unstable();
    let sum: f64 = rows.iter().map(|&i| targets[i]).sum();
    sum / rows.len() as f64
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Bounded candidate list sorted by `(distance, row)`.
struct Best {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl Best {
    fn new(k: usize) -> Self {
        Best {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn full(&self) -> bool {
        self.items.len() == self.k
    }

    fn worst(&self) -> f64 {
        self.items.last().map(|x| x.0).unwrap_or(f64::INFINITY)
    }

    fn offer(&mut self, dist: f64, row: usize) {
        let key = (dist, row);
        if self.full() {
            let last = self.items[self.k - 1];
            if !less(key, last) {
                return;
            }
        }
        let pos = self.items.partition_point(|&x| less(x, key));
        self.items.insert(pos, key);
        self.items.truncate(self.k);
    }
}

#[inline]
fn less(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

#[derive(Debug, Clone)]
enum KdNode {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct KdTree {
    nodes: Vec<KdNode>,
    order: Vec<usize>,
}

impl KdTree {
    fn build(x: &FeatureMatrix) -> Self {
        let mut tree = KdTree {
            nodes: Vec::new(),
            order: (0..x.rows).collect(),
        };
        let n = x.rows;
        tree.build_node(x, 0, n);
        tree
    }

    fn build_node(&mut self, x: &FeatureMatrix, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(KdNode::Leaf { start, end });
        if end - start <= LEAF_SIZE {
            return id;
        }
        // split on the widest dimension at the median
        let mut dim = 0;
        let mut spread = -1.0;
        for d in 0..x.cols {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[start..end] {
                let v = x.get(i, d);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > spread {
                spread = hi - lo;
                dim = d;
            }
        }
        if spread <= 0.0 {
            return id;
        }
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            x.get(a, dim).total_cmp(&x.get(b, dim)).then(a.cmp(&b))
        });
        let value = x.get(self.order[mid], dim);
        let left = self.build_node(x, start, mid);
        let right = self.build_node(x, mid, end);
        self.nodes[id] = KdNode::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    fn search(&self, x: &FeatureMatrix, query: &[f64], best: &mut Best) {
        self.visit(0, x, query, best);
    }

    fn visit(&self, node: usize, x: &FeatureMatrix, query: &[f64], best: &mut Best) {
        match self.nodes[node] {
            KdNode::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    best.offer(sq_dist(x.row(i), query), i);
                }
            }
            KdNode::Split {
                dim,
                value,
                left,
                right,
            } => {
                // Left subtree holds values ≤ split, right holds values ≥ split.
                let diff = query[dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.visit(near, x, query, best);
                // Strict comparison keeps equal-distance candidates reachable for tie-breaks.
                if !best.full() || diff * diff <= best.worst() {
                    self.visit(far, x, query, best);
                }
            }
        }
    }
}
